use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (even after diagonal loading)")]
    NotPositiveDefinite,
    #[error("iteration did not converge after {0} steps")]
    NoConvergence(usize),
    #[error("argument out of domain: {0}")]
    DomainError(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("mixture component {0} degenerated and could not be re-seeded")]
    DegenerateComponent(usize),
    #[error("numerical overflow in {0}")]
    NumericalOverflow(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
