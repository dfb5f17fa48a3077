//! Crate-wide error type with CLI exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid invocation: bad flags, unknown model names, malformed configs.
    #[error("usage: {0}")]
    Usage(String),

    /// Broken or inconsistent data: unreadable files, schema violations,
    /// shape mismatches between declared and actual content.
    #[error("data: {0}")]
    Data(String),

    /// Numeric failure: non-finite loss or gradients, failed convergence.
    #[error("numeric: {0}")]
    Numeric(String),

    /// Model description errors: impossible shapes, unknown layer wiring.
    #[error("shape error at layer {layer} ({kind}): {message}")]
    Shape {
        layer: usize,
        kind: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Data(_) | Error::Io { .. } | Error::Shape { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}
