use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KinnError>;

/// Coarse failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input, bad configuration or a violated precondition.
    Usage,
    /// A numerical routine failed (divergence, non-stationary fit, ...).
    Computation,
    /// Reading or writing files failed.
    Io,
}

#[derive(Debug, Error)]
pub enum KinnError {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("timestamps not increasing at row {index}")]
    NonMonotonic { index: usize },

    #[error("gap in timestamps at row {index}: expected +{expected}s, found +{found}s")]
    Gap {
        index: usize,
        expected: i64,
        found: i64,
    },

    #[error("bucket of {bucket}s is not a positive multiple of the {interval}s interval")]
    InvalidBucket { bucket: i64, interval: i64 },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("misaligned inputs: expected {expected} entries, got {got}")]
    Misaligned { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient history: need {needed} values, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-stationary autoregressive polynomial: {0}")]
    NonStationary(String),

    #[error("non-finite value in parameter block `{block}`")]
    NonFinite { block: String },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl KinnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KinnError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use KinnError::*;
        match self {
            Io { .. } | Csv(_) => ErrorClass::Io,
            NonStationary(_) | NonFinite { .. } | Divergence { .. } => ErrorClass::Computation,
            _ => ErrorClass::Usage,
        }
    }
}
