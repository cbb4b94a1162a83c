use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NiertError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NiertError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular system: pivot {pivot:e} at column {column}")]
    SingularSystem { column: usize, pivot: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),

    #[error("gradient requested for a node that is not part of a recorded graph")]
    GraphNotRecorded,

    #[error("degenerate function: value range {range:e} on probe points")]
    DegenerateFunction { range: f64 },

    #[error("function rejected after {attempts} consecutive invalid sampling attempts")]
    RejectedFunction { attempts: usize },

    #[error("non-finite loss on task {source_id}")]
    NonFiniteLoss { source_id: String },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl NiertError {
    pub fn shape(msg: impl Into<String>) -> Self {
        NiertError::ShapeMismatch(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NiertError::Io {
            path: path.into(),
            source,
        }
    }
}
