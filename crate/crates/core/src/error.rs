use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("frequency {frequency} MHz outside window [{lo}, {hi}] MHz")]
    OutOfWindow { frequency: f64, lo: f64, hi: f64 },

    #[error("only {available} frequencies available, {requested} requested")]
    InsufficientFrequencies { available: usize, requested: usize },

    #[error("problem too large for exhaustive search: {size} > {max}")]
    TooLarge { size: usize, max: usize },

    #[error("backend failure: {0}")]
    Backend(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
