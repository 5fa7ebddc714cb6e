use thiserror::Error;

/// Errors raised by model construction, factorization and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LagError {
    #[error("correlation rho = {0} must lie in (-1, 0) or (0, 1)")]
    InvalidRho(f64),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("lag {theta} is outside Theta_n = [-{bound}, {bound}]")]
    LagOutOfDomain { theta: f64, bound: f64 },

    #[error(
        "covariance at theta = {theta} is not positive definite (pivot {pivot:e} at index {index})"
    )]
    NotPositiveDefinite {
        theta: f64,
        index: usize,
        pivot: f64,
    },

    #[error("covariance is indefinite: most negative eigenvalue {min_eigenvalue:e}")]
    Indefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("quadrature did not converge: last {last}, previous {previous}")]
    QuadratureFailed { last: f64, previous: f64 },
}

pub type Result<T> = std::result::Result<T, LagError>;
