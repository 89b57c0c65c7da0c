use thiserror::Error;

/// Errors produced by the grid, equation, solver and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("resolution {resolution} out of range for S^{sphere_dim}: {reason}")]
    ResolutionOutOfRange {
        sphere_dim: usize,
        resolution: usize,
        reason: &'static str,
    },

    #[error("unsupported dimension n = {0}")]
    UnsupportedDimension(usize),

    #[error("degenerate derivative stencil at node {node}: {reason}")]
    DegenerateStencil { node: usize, reason: String },

    #[error("grid is not closed under the antipodal map (node {node})")]
    NotAntipodal { node: usize },

    #[error("field has {got} values but the grid has {expected} nodes")]
    FieldLength { expected: usize, got: usize },

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("support function must be positive, found h = {value} at node {node}")]
    NonPositiveSupport { node: usize, value: f64 },

    #[error("density must be nonnegative, found f = {value} at node {node}")]
    NegativeDensity { node: usize, value: f64 },

    #[error("density must be strictly positive, found f = {value} at node {node}")]
    NonPositiveDensity { node: usize, value: f64 },

    #[error("density must not vanish identically")]
    ZeroDensity,

    #[error("det b = {det} <= 0 at node {node}: convexity lost")]
    LostConvexity { node: usize, det: f64 },

    #[error("exponents p = q = {0}: the constant-solution scale is undefined")]
    EqualExponents(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no grid node sees direction {0:?} (grid does not cover the sphere)")]
    NoVisibleNode([f64; 3]),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton did not converge after {iterations} iterations (sup|G| = {residual:.3e}): {reason}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
