use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pricing library.
#[derive(Debug, Error)]
pub enum Error {
    /// The configuration text could not be parsed, or a field had the wrong type.
    #[error("config parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    /// A value parsed fine but violates a model invariant.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// Array shapes do not agree (channels vs. scenario vs. strategy).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical routine failed to produce a usable answer.
    #[error("solver failure: {0}")]
    Solver(String),

    /// The brute-force oracle refuses instances above its size limits.
    #[error("instance too large for oracle: {0}")]
    OracleSize(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
