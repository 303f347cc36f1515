use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration value; the message names the offending field.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with arguments that violate its contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// Evaluation outside the domain where the object is defined.
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "insufficient data: requested order {requested}, only {available} coefficients available"
    )]
    InsufficientData { requested: usize, available: usize },
    /// Linear solve failure or non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
