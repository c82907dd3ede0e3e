use thiserror::Error;

use crate::datalake::Imsi;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("duplicate key (imsi={imsi}, timestamp_ms={timestamp_ms})")]
    DuplicateKey { imsi: Imsi, timestamp_ms: u64 },

    #[error("lifecycle: {0}")]
    Lifecycle(String),

    #[error("replay mismatch at transcript line {line}: expected {expected:?}, got {actual:?}")]
    ReplayMismatch {
        line: usize,
        expected: String,
        actual: String,
    },

    #[error("malformed transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
