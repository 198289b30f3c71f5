use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomial degree {degree} exceeds cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("empty truncation range: {0}")]
    EmptyRange(String),
    #[error("configuration is not contractive: operator bound {operator_bound:.6e}")]
    NonContractive { operator_bound: f64 },
    #[error("no admissible smoothing width: {0}")]
    NoAdmissibleGamma(String),
    #[error("inadmissible shift: {0}")]
    InadmissibleShift(String),
    #[error("zero-norm input")]
    ZeroNorm,
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
