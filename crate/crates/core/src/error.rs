use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("sentence {id}: span out of range")]
    SpanOutOfRange { id: String },

    #[error("sentence {id}: {message}")]
    InvalidSentence { id: String, message: String },

    #[error("sentence {id}: bookmark and attribute spans overlap")]
    Overlap { id: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mask has no valid entries")]
    EmptyMask,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("loss diverged at epoch {epoch} (value {value})")]
    Diverged { epoch: usize, value: f64 },

    #[error("infeasible synthetic mix: {0}")]
    Infeasible(String),

    #[error("rule conflict: cue {cue:?} is listed as both {first} and {second}")]
    RuleConflict {
        cue: String,
        first: String,
        second: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
