use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid variance profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty spectral domain: {0}")]
    EmptyDomain(String),

    #[error("eigensolver failed (residual {residual:e}, tolerance {tolerance:e})")]
    Eigensolver { residual: f64, tolerance: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("stability operator is near-singular (condition estimate {condition:e})")]
    NearSingular { condition: f64 },

    #[error("resolvent diagonal entry G[{0}][{0}] vanished")]
    ZeroDiagonal(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
