use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced in {context}")]
    NonFinite { context: String },

    #[error("variable is not on this tape")]
    NotOnTape,

    #[error("tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("dataset format error: {0}")]
    DatasetFormat(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training aborted at epoch {epoch}, batch {batch}: {reason}")]
    TrainAborted {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("output directory {0} is locked by another process (remove the .sharplens.lock file if stale)")]
    OutputLocked(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
