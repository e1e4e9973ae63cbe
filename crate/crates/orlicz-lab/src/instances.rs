//! Builtin instance construction from manifest sections.
//!
//! An `[instance <name>]` section declares a solved problem family at one or
//! more resolutions:
//!
//! ```text
//! [instance dirac3]
//! kind = dirac              # dirac | density | homogeneous
//! modular = plaplace:p=2
//! dim = 3
//! half = 1.0                # box [-half, half]^dim
//! cells = 64,96             # one entry per refinement level
//! window = 0.45             # evaluation ball at the origin
//! levels = 8,32,128         # optional truncation ladder (dirac/density)
//! profile = inv_sqrt        # density instances: const | inv_sqrt | inv
//! trace = builtin:osc       # homogeneous instances; or zero/affine:...
//! mass = 1.0                # dirac instances
//! ```

use crate::descriptor;
use crate::manifest::{self, Section};
use crate::{LabError, Result};
use orlicz_core::estimates::{Instance, InstanceInputs};
use orlicz_core::grid::{Ball, DiracLoading, Grid, GridField, MeasureData};
use orlicz_core::solver::{BoundaryTrace, SolveOpts};
use std::path::Path;

/// Named analytic density profiles usable from manifests.
pub fn builtin_profile(name: &str) -> Result<fn(&[f64]) -> f64> {
    match name {
        "const" => Ok(|_| 1.0),
        "inv_sqrt" => Ok(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            1.0 / (0.05 + r2).sqrt()
        }),
        "inv" => Ok(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            1.0 / (0.1 + r2.sqrt())
        }),
        other => Err(LabError::Parse(format!("unknown density profile `{other}`"))),
    }
}

/// The oscillating homogeneous trace used by the shipped fixtures.
pub fn oscillating_trace(grid: Grid) -> BoundaryTrace {
    BoundaryTrace::Nodal(GridField::from_fn(grid, |x| {
        let mut v = (2.0 * x[0]).sin() + 0.5 * (3.0 * x[1]).cos() + 0.3 * x[0] * x[1];
        if x.len() > 2 {
            v += 0.4 * (2.0 * x[2]).sin();
        }
        v
    }))
}

pub fn build_instance(sec: &Section, base: &Path) -> Result<Instance> {
    let kind = manifest::need(sec, "kind")?;
    let dim: usize = manifest::need(sec, "dim")?
        .parse()
        .map_err(|_| LabError::Parse("bad dim".into()))?;
    let half = manifest::opt_f64(sec, "half", 1.0)?;
    let cells = manifest::usize_list(manifest::need(sec, "cells")?)?;
    if cells.is_empty() {
        return Err(LabError::Parse("instance needs at least one cells entry".into()));
    }
    let grids: Vec<Grid> = cells
        .iter()
        .map(|&c| Grid::centered_cube(dim, half, c).map_err(LabError::from))
        .collect::<Result<_>>()?;
    let window = Ball::new(&[0.0; 3][..dim], manifest::opt_f64(sec, "window", 0.45 * half)?)?;
    let modular = descriptor::parse_modular(
        sec.keys.get("modular").map(String::as_str).unwrap_or("plaplace:p=2"),
        base,
    )?;
    let mut opts = SolveOpts::default();
    opts.rel_tol = manifest::opt_f64(sec, "rel_tol", opts.rel_tol)?;
    let sola_levels = match sec.keys.get("levels") {
        Some(v) => Some(manifest::float_list(v)?),
        None => None,
    };
    let (mu, boundary) = match kind {
        "dirac" => {
            let mass = manifest::opt_f64(sec, "mass", 1.0)?;
            (MeasureData::atom(&[0.0; 3][..dim], mass), BoundaryTrace::Zero)
        }
        "density" => {
            let profile = builtin_profile(
                sec.keys.get("profile").map(String::as_str).unwrap_or("inv_sqrt"),
            )?;
            let density = GridField::from_fn(grids[0], |x| profile(x));
            (MeasureData::from_density(density), BoundaryTrace::Zero)
        }
        "homogeneous" => {
            let boundary = match sec.keys.get("trace").map(String::as_str) {
                None | Some("builtin:osc") => oscillating_trace(grids[0]),
                Some(other) => descriptor::parse_boundary(other, base, &grids[0])?,
            };
            (MeasureData::zero(), boundary)
        }
        other => return Err(LabError::Parse(format!("unknown instance kind `{other}`"))),
    };
    Ok(Instance::build(InstanceInputs {
        modular,
        mu,
        boundary,
        grids,
        sola_levels,
        loading: DiracLoading::NearestNode,
        window,
        opts,
    })?)
}
