use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degree-of-freedom count must be at least 1")]
    ZeroDof,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not symmetric (defect {0:.3e})")]
    Asymmetric(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("derivative of order {requested} requested but only {available} available")]
    DerivativeUnavailable { requested: usize, available: usize },
    #[error("step potential has no pointwise derivative of order {0}")]
    StepDerivative(usize),
    #[error("covariance violates the uncertainty bound: smallest symplectic eigenvalue {0:.6} is below 1/2")]
    Inadmissible(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid axis has {0} points, at least 7 are required")]
    GridTooCoarse(usize),
    #[error("boundary mass fraction {fraction:.3e} exceeds {limit:.1e}")]
    BoundaryMass { fraction: f64, limit: f64 },
    #[error("point {0} lies outside the grid interior")]
    OutsideGrid(f64),
    #[error("finite-difference evaluation produced a non-finite value at step {0:.1e}")]
    SingularDifference(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
