use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the quantization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("non-finite parameter at index {index}")]
    NonFiniteParameter { index: usize },

    #[error("non-finite loss {loss} at iteration {iteration} (batch element {batch_index})")]
    NonFiniteLoss {
        iteration: usize,
        batch_index: usize,
        loss: f64,
    },

    #[error("training diverged at iteration {iteration}: {source}")]
    Diverged {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: i64, expected: i64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed document: {0}")]
    Parse(String),

    #[error("failed to write checkpoint {path}: {source}")]
    CheckpointWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
