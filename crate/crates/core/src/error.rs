use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {file} at line {line}, column {column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("insufficient eligible playlists for category {category}: need {needed}, found {found}")]
    InsufficientPlaylists {
        category: String,
        needed: usize,
        found: usize,
    },

    #[error("data error for track {track_uri}: {message}")]
    TrackData { track_uri: String, message: String },

    #[error("invalid hyperparameter: {0}")]
    HyperParam(String),

    #[error("index {index} out of range for {what} of size {size}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("training diverged at epoch {epoch}: non-finite parameter")]
    Diverged { epoch: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("submission validation failed for pids {pids:?}: {reason}")]
    Validation { pids: Vec<u64>, reason: String },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
