//! Error taxonomy shared across the crate.
//!
//! Shape and input problems are rejected before any computation runs;
//! `Numerical` surfaces non-finite values that appear mid-computation and
//! always names where they were found.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not line up.
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },

    /// Input rejected before any computation ran.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A non-finite value surfaced mid-computation.
    #[error("numerical failure: {context}")]
    Numerical { context: String },

    /// Malformed file contents.
    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    /// I/O failure, tagged with the path that caused it.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad run configuration.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, detail: detail.into() }
    }

    pub(crate) fn numerical(context: impl Into<String>) -> Self {
        Error::Numerical { context: context.into() }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
