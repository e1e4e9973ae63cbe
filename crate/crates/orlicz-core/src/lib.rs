//! Numerical toolbox for measure-data elliptic problems with Orlicz growth.
//!
//! The crate turns the objects of Orlicz-space regularity theory into
//! computable ones:
//!
//! * [`young`] — Young-function algebra: evaluation, growth indices,
//!   conjugation, inversion, Sobolev conjugation and doubling constants;
//! * [`grid`] — uniform rectangular grids, scalar/vector fields, finite
//!   measures, gradients, level sets and ball enumeration;
//! * [`norms`] — Lebesgue, Lorentz, Marcinkiewicz, Morrey, Lorentz-Morrey and
//!   L log L norms by exact layer-cake integration of nodal fields;
//! * [`maximal`] — restricted maximal operators of order zero and one over a
//!   ball family, plus their mapping-property checks;
//! * [`solver`] — finite-difference solution of the weighted Orlicz-Laplacian
//!   with Dirichlet data, approximation sequences for measure data, and
//!   homogeneous comparison maps on balls;
//! * [`estimates`] — empirical two-sided evaluation of the gradient
//!   estimates, producing pass/fail reports with measured constants.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature instead of `std` to build without the standard library.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod estimates;
pub mod grid;
mod math;
pub mod maximal;
pub mod norms;
pub mod report;
pub mod solver;
pub mod young;

use core::fmt;

/// Errors shared by all modules of the crate.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range. The message names the
    /// parameter and, when one exists, the admissible bound.
    InvalidParameter(alloc::string::String),
    /// An iterative scalar routine (maximization, bisection) exhausted its
    /// iteration budget.
    NonConvergence(alloc::string::String),
    /// The defining integral of a transform diverges, so the requested
    /// object does not exist for this modular function.
    DivergentIntegral(alloc::string::String),
    /// A sampled quotient or table entry is non-finite or degenerate.
    DegenerateSample(alloc::string::String),
    /// Requested value exceeds the representable range of the function.
    OutOfRange(alloc::string::String),
    /// Grid construction or pairing failure (anisotropic spacing, budget,
    /// mismatched grids).
    GridError(alloc::string::String),
    /// An atom of a measure lies outside the grid box.
    AtomOutsideDomain { location: [f64; 3] },
    /// The nonlinear solver did not reach the requested tolerance.
    SolverDiverged { residual: f64, iterations: usize },
    /// A comparison ball spans fewer than the minimal number of cells.
    BallTooSmall { radius: f64, h: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::NonConvergence(m) => write!(f, "iteration budget exhausted: {m}"),
            Error::DivergentIntegral(m) => write!(f, "divergent integral: {m}"),
            Error::DegenerateSample(m) => write!(f, "degenerate sample: {m}"),
            Error::OutOfRange(m) => write!(f, "out of range: {m}"),
            Error::GridError(m) => write!(f, "grid error: {m}"),
            Error::AtomOutsideDomain { location } => {
                write!(f, "atom at {location:?} lies outside the grid box")
            }
            Error::SolverDiverged { residual, iterations } => write!(
                f,
                "solver did not converge: residual {residual:.3e} after {iterations} iterations"
            ),
            Error::BallTooSmall { radius, h } => {
                write!(f, "ball of radius {radius} spans fewer than 4 cells (h = {h})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub use grid::{Ball, Grid, GridField, MeasureData, Region};
pub use norms::{NormFamily, NormSpec};
pub use report::{EstimateId, EstimateReport};
pub use young::{IndexLevel, IndexPair, YoungFunction};
