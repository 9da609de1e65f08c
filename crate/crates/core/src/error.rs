//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// CSV or checkpoint content could not be parsed. `row` is 1-based for
    /// data rows; row 0 refers to the header.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("did not converge within {max_iter} iterations (last residual {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
