use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle budget exceeded in round {round}: {used} used + {requested} requested > {limit}")]
    BudgetExceeded {
        round: usize,
        used: usize,
        requested: usize,
        limit: usize,
    },

    #[error("sequence not present in tabular oracle: {0}")]
    LookupMiss(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("forward cache is stale (network version {cache} vs {current})")]
    StaleCache { cache: u64, current: u64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
