use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, e.g. a panorama width that is not divisible by
    /// the requested stride divisor.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller passed arguments that violate an operation's preconditions.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Numeric input outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range (len {len})")]
    Bounds { index: usize, len: usize },

    /// Malformed binary payload.
    #[error("format error: {0}")]
    Format(String),

    /// Malformed text input, with the 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
