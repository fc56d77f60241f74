//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by cube/image construction, file I/O, and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor was handed values that violate a type invariant.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two operands have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A payload contained NaN or infinite values.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A file does not conform to the expected byte layout.
    #[error("format error in {path}: {reason} (byte offset {offset})")]
    Format {
        path: PathBuf,
        reason: String,
        offset: u64,
    },

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An iterative routine failed to converge or left its valid bracket.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>, offset: u64) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
            offset,
        }
    }
}
