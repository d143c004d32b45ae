use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation library and the CLI front end.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's contract (mismatched dimensions,
    /// out-of-range index, oversized oracle instance, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric parameter is outside the domain of the formula or generator.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed data file. `row` and `column` are 1-based.
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
