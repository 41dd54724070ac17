use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two suites (or a suite and a config) disagree on the number of sequences.
    #[error("suite size mismatch: {left} sequences vs {right}")]
    SuiteSizeMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("event {event} outside alphabet of size {alphabet_size}")]
    EventOutOfAlphabet { event: u32, alphabet_size: usize },

    #[error("point {point} lies outside the hypervolume reference box {reference}")]
    OutsideReference { point: String, reference: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported app model format version {0}")]
    UnsupportedVersion(u32),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by an invalid experiment or engine configuration.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}
