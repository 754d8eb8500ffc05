use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CeiqError>;

#[derive(Debug, Error)]
pub enum CeiqError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The statistic is undefined for the given data, e.g. a correlation
    /// against a constant vector.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solver did not converge after {iterations} passes (objective {objective})")]
    NotConverged { iterations: usize, objective: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CeiqError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CeiqError::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        CeiqError::Degenerate(msg.into())
    }
}
