//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file could not be read or parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// A parameter or argument violates a stated invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Linear program could not be solved to optimality.
    #[error("lp error: {0}")]
    Lp(String),

    /// Measured statistics are missing or empty where they are required.
    #[error("no statistics: {0}")]
    NoStatistics(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
