use thiserror::Error;

/// Errors raised by tensor primitives, problem construction and file parsing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for a tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index:?} out of range for dims {dims:?}")]
    IndexOutOfRange { index: Vec<usize>, dims: Vec<usize> },

    #[error("duplicate index {0:?}")]
    DuplicateIndex(Vec<usize>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
