use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A closed form was evaluated outside its domain of validity.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate denominator: noise plus interference is zero")]
    DegenerateDenominator,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("krum needs at least f + 3 = {required} updates, got {got}")]
    InsufficientClients { required: usize, got: usize },

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("{path}: {message} (byte offset {offset})")]
    Ingestion {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
