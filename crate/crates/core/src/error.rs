use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Extents disagree along a named axis.
    #[error("dimension mismatch on {axis}: expected {expected}, got {got}")]
    Dimension {
        axis: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("empty histogram source")]
    EmptyHistogram,

    #[error("empty relevant set")]
    EmptyRelevantSet,

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("cannot form positives: no pain level has at least two frames")]
    CannotFormPositives,

    #[error("unknown subject `{0}`")]
    UnknownSubject(String),

    #[error("feature is not unit-normalized (norm {0})")]
    NotNormalized(f64),

    #[error("non-finite loss at {0}")]
    NonFinite(String),

    #[error("decoder mirror diverged from encoder at `{0}`")]
    MirrorDiverged(String),

    #[error("malformed {kind} stream: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            axis: axis.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }
}
