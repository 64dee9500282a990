use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped by the kind of failure rather than by module so that
/// callers (the CLI's exit codes, the C API's status codes) can classify them
/// with a single match.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index {index} out of range for {what} of size {size}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("attention row has no valid keys")]
    FullyMasked,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("corrupt or incompatible data: {0}")]
    Format(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
