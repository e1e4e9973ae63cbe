//! Flat binary layout for grid fields, plus CSV export for small grids.
//!
//! Layout (little-endian): `dimension: u64`, `components: u64`,
//! `cells_per_axis: u64 x dim`, `origin: f64 x dim`, `extent: f64 x dim`,
//! then node values in row-major order (x fastest), one block per
//! component.

use crate::{LabError, Result};
use orlicz_core::grid::{Grid, GridField};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_field(path: &Path, field: &GridField) -> Result<()> {
    let grid = field.grid();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let n = grid.dim();
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(field.ncomp() as u64).to_le_bytes())?;
    for d in 0..n {
        w.write_all(&(grid.cells()[d] as u64).to_le_bytes())?;
    }
    for d in 0..n {
        w.write_all(&grid.origin()[d].to_le_bytes())?;
    }
    for d in 0..n {
        w.write_all(&grid.extent()[d].to_le_bytes())?;
    }
    for &v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<GridField> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<std::fs::File>| -> Result<u64> {
        r.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let n = read_u64(&mut r)? as usize;
    if !(n == 2 || n == 3) {
        return Err(LabError::Format(format!("bad dimension {n}")));
    }
    let ncomp = read_u64(&mut r)? as usize;
    if ncomp == 0 || ncomp > 3 {
        return Err(LabError::Format(format!("bad component count {ncomp}")));
    }
    let mut cells = vec![0usize; n];
    for c in cells.iter_mut() {
        r.read_exact(&mut u64buf)?;
        *c = u64::from_le_bytes(u64buf) as usize;
    }
    let mut f64buf = [0u8; 8];
    let mut read_f64 = |r: &mut BufReader<std::fs::File>| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut origin = vec![0.0; n];
    for o in origin.iter_mut() {
        *o = read_f64(&mut r)?;
    }
    let mut extent = vec![0.0; n];
    for e in extent.iter_mut() {
        *e = read_f64(&mut r)?;
    }
    let grid = Grid::new(n, &origin, &extent, &cells)?;
    let count = grid.node_count() * ncomp;
    let mut values = Vec::with_capacity(count);
    let mut buf = vec![0u8; 8 * 4096];
    while values.len() < count {
        let want = ((count - values.len()) * 8).min(buf.len());
        r.read_exact(&mut buf[..want])?;
        for chunk in buf[..want].chunks_exact(8) {
            values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    Ok(GridField::from_values(grid, ncomp, values)?)
}

/// CSV export: one row per node, `x,y[,z],v0[,v1,...]`.
pub fn write_field_csv(path: &Path, field: &GridField) -> Result<()> {
    let grid = field.grid();
    let n = grid.dim();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = (0..n).map(|d| ["x", "y", "z"][d].to_string()).collect();
    for c in 0..field.ncomp() {
        header.push(format!("v{c}"));
    }
    writeln!(w, "{}", header.join(","))?;
    for (idx, x) in grid.node_positions() {
        let mut row: Vec<String> = (0..n).map(|d| format!("{}", x[d])).collect();
        for c in 0..field.ncomp() {
            row.push(format!("{}", field.value(c, idx)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}


/// Serialize a maximal field: the values as a plain field file plus a
/// `<path>.meta.txt` sidecar carrying the anchor, operator order and
/// ladder parameters.
pub fn write_maximal_field(path: &Path, m: &orlicz_core::maximal::MaximalField) -> Result<()> {
    write_field(path, &m.field)?;
    let n = m.field.grid().dim();
    let center: Vec<String> = m.anchor.center[..n].iter().map(|v| format!("{v}")).collect();
    let ladder: Vec<String> = m.ladder.iter().map(|v| format!("{v}")).collect();
    let order = match m.order {
        orlicz_core::maximal::MaximalOrder::Zero => "zero",
        orlicz_core::maximal::MaximalOrder::One => "one",
    };
    let sidecar = format!(
        "order = {order}\nanchor_center = {}\nanchor_radius = {}\nladder = {}\ntruncated = {}\n",
        center.join(","),
        m.anchor.radius,
        ladder.join(","),
        m.truncated,
    );
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.txt");
    std::path::PathBuf::from(os)
}

/// Serialize a measure as a text manifest (atoms plus an optional density
/// file written next to it).
pub fn write_measure(path: &Path, mu: &orlicz_core::grid::MeasureData) -> Result<()> {
    let mut text = String::new();
    let n = mu.density.as_ref().map(|d| d.grid().dim()).unwrap_or(3);
    for (loc, mass) in &mu.atoms {
        let coords: Vec<String> = loc[..n].iter().map(|v| format!("{v}")).collect();
        text.push_str(&format!("atom = {},{mass}\n", coords.join(",")));
    }
    if let Some(d) = &mu.density {
        let dens_name = format!(
            "{}.density.bin",
            path.file_stem().and_then(|s| s.to_str()).unwrap_or("measure")
        );
        write_field(&path.with_file_name(&dens_name), d)?;
        text.push_str(&format!("density = {dens_name}\n"));
    }
    text.push_str(&format!("bound = {}\n", mu.total_mass_bound));
    std::fs::write(path, text)?;
    Ok(())
}
