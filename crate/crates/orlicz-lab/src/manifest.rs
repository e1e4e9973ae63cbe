//! Declarative text manifests: measures, solve problems, and verification
//! suites (INI-style `key = value` sections).

use crate::descriptor;
use crate::fieldfile;
use crate::{LabError, Result};
use orlicz_core::grid::{Grid, GridField, MeasureData};
use orlicz_core::solver::{BoundaryTrace, Omega, SolveOpts};
use orlicz_core::young::YoungFunction;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// One manifest section: the bracketed header words plus its keys.
#[derive(Clone, Debug)]
pub struct Section {
    pub header: Vec<String>,
    pub keys: BTreeMap<String, String>,
}

/// Parse INI-style text: `[kind name ...]` headers, `key = value` lines,
/// `#` comments. Keys before any header go into an unnamed leading section.
pub fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    let mut current = Section { header: Vec::new(), keys: BTreeMap::new() };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| LabError::Parse(format!("line {}: unterminated section", lineno + 1)))?;
            if !current.header.is_empty() || !current.keys.is_empty() {
                sections.push(std::mem::replace(
                    &mut current,
                    Section { header: Vec::new(), keys: BTreeMap::new() },
                ));
            }
            current.header = inner.split_whitespace().map(str::to_string).collect();
            if current.header.is_empty() {
                return Err(LabError::Parse(format!("line {}: empty section header", lineno + 1)));
            }
        } else {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            current.keys.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    if !current.header.is_empty() || !current.keys.is_empty() {
        sections.push(current);
    }
    Ok(sections)
}

pub fn need<'a>(sec: &'a Section, key: &str) -> Result<&'a str> {
    sec.keys
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| LabError::Parse(format!("section [{}] needs `{key}`", sec.header.join(" "))))
}

pub fn opt_f64(sec: &Section, key: &str, default: f64) -> Result<f64> {
    match sec.keys.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| LabError::Parse(format!("bad number for `{key}`: {v}"))),
    }
}

pub fn need_f64(sec: &Section, key: &str) -> Result<f64> {
    need(sec, key)?.parse().map_err(|_| LabError::Parse(format!("bad number for `{key}`")))
}

pub fn float_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| LabError::Parse(format!("bad number `{v}`"))))
        .collect()
}

pub fn usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| LabError::Parse(format!("bad integer `{v}`"))))
        .collect()
}

/// A measure manifest: `atom = x,y[,z],mass` lines, an optional
/// `density = <field file>` and an optional `bound = v`.
pub fn read_measure(path: &Path) -> Result<MeasureData> {
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = std::fs::read_to_string(path)?;
    let mut atoms = Vec::new();
    let mut density: Option<GridField> = None;
    let mut bound: Option<f64> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| LabError::Parse(format!("measure line {}: key = value", lineno + 1)))?;
        match k.trim() {
            "atom" => {
                let vals = float_list(v)?;
                if vals.len() < 3 || vals.len() > 4 {
                    return Err(LabError::Parse(format!(
                        "measure line {}: atom needs x,y[,z],mass",
                        lineno + 1
                    )));
                }
                let mut loc = [0.0; 3];
                loc[..vals.len() - 1].copy_from_slice(&vals[..vals.len() - 1]);
                atoms.push((loc, vals[vals.len() - 1]));
            }
            "density" => {
                density = Some(fieldfile::read_field(&base.join(v.trim()))?);
            }
            "bound" => {
                bound =
                    Some(v.trim().parse().map_err(|_| LabError::Parse("bad bound".into()))?);
            }
            other => {
                return Err(LabError::Parse(format!(
                    "measure line {}: unknown key `{other}`",
                    lineno + 1
                )))
            }
        }
    }
    let mut mu = MeasureData { atoms, density, total_mass_bound: 0.0 };
    mu.total_mass_bound = bound.unwrap_or_else(|| mu.total_variation());
    Ok(mu)
}

/// A fully parsed solve problem.
pub struct Problem {
    pub modular: YoungFunction,
    pub omega: Omega,
    pub grid: Grid,
    pub measure: MeasureData,
    pub boundary: BoundaryTrace,
    pub opts: SolveOpts,
    pub output: Option<PathBuf>,
}

/// Problem manifest keys: `modular`, `omega` (`const:c` | `field:path`),
/// `measure` (path | `none`), `boundary` (`zero` | `affine:...` |
/// `field:path`), `grid` (`dim=..,origin=..;..,extent=..;..,cells=..;..`),
/// `rel_tol`, `max_outer`, `output`.
pub fn read_problem(path: &Path) -> Result<Problem> {
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = std::fs::read_to_string(path)?;
    let sections = parse_sections(&text)?;
    let sec = sections
        .first()
        .ok_or_else(|| LabError::Parse("empty problem manifest".into()))?;
    let grid = parse_grid(need(sec, "grid")?)?;
    let modular = descriptor::parse_modular(need(sec, "modular")?, &base)?;
    let omega = match sec.keys.get("omega") {
        None => Omega::Const(1.0),
        Some(v) => descriptor::parse_omega(v, &base, &grid)?,
    };
    let measure = match sec.keys.get("measure").map(String::as_str) {
        None | Some("none") => MeasureData::zero(),
        Some(p) => read_measure(&base.join(p))?,
    };
    let boundary = match sec.keys.get("boundary") {
        None => BoundaryTrace::Zero,
        Some(v) => descriptor::parse_boundary(v, &base, &grid)?,
    };
    let mut opts = SolveOpts::default();
    opts.rel_tol = opt_f64(sec, "rel_tol", opts.rel_tol)?;
    if let Some(v) = sec.keys.get("max_outer") {
        opts.max_outer =
            v.parse().map_err(|_| LabError::Parse("bad max_outer".into()))?;
    }
    let output = sec.keys.get("output").map(|v| base.join(v));
    Ok(Problem { modular, omega, grid, measure, boundary, opts, output })
}

/// `dim=2,origin=-1;-1,extent=2;2,cells=64;64` (semicolon-separated per-axis
/// values inside comma-separated fields).
pub fn parse_grid(text: &str) -> Result<Grid> {
    let mut dim = None;
    let mut origin = None;
    let mut extent = None;
    let mut cells = None;
    for part in text.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| LabError::Parse(format!("grid field `{part}` needs =")))?;
        match k.trim() {
            "dim" => dim = Some(v.trim().parse::<usize>().map_err(|_| LabError::Parse("bad dim".into()))?),
            "origin" => origin = Some(semi_floats(v)?),
            "extent" => extent = Some(semi_floats(v)?),
            "cells" => {
                cells = Some(
                    v.split(';')
                        .map(|s| s.trim().parse().map_err(|_| LabError::Parse("bad cells".into())))
                        .collect::<Result<Vec<usize>>>()?,
                )
            }
            other => return Err(LabError::Parse(format!("unknown grid field `{other}`"))),
        }
    }
    let dim = dim.ok_or_else(|| LabError::Parse("grid needs dim=".into()))?;
    let origin = origin.ok_or_else(|| LabError::Parse("grid needs origin=".into()))?;
    let extent = extent.ok_or_else(|| LabError::Parse("grid needs extent=".into()))?;
    let cells = cells.ok_or_else(|| LabError::Parse("grid needs cells=".into()))?;
    Ok(Grid::new(dim, &origin, &extent, &cells)?)
}

fn semi_floats(text: &str) -> Result<Vec<f64>> {
    text.split(';')
        .map(|v| v.trim().parse().map_err(|_| LabError::Parse(format!("bad number `{v}`"))))
        .collect()
}
