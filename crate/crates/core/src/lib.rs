//! L_p dual Minkowski Monge-Ampere laboratory.

pub mod analysis;
pub mod cli;
pub mod convex;
pub mod equation;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod solver;

pub use convex::{RadialFn, SupportFn};
pub use equation::ProblemParams;
pub use error::{Error, Result};
pub use grid::{build_grid, Grid, GridSpec, ScalarField};
pub use linalg::SymMat;
