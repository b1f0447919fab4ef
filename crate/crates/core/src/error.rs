use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the filter engine, the training loop and the file formats.
#[derive(Debug, Error)]
pub enum JbfError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },

    #[error("invalid dimensions {0:?}: every axis must be positive")]
    InvalidDims([usize; 3]),

    #[error("data length {len} does not match dims {dims:?}")]
    LengthMismatch { dims: [usize; 3], len: usize },

    #[error("non-finite value at voxel {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("region {origin:?}+{extent:?} exceeds volume dims {dims:?}")]
    RoiOutOfBounds {
        origin: [usize; 3],
        extent: [usize; 3],
        dims: [usize; 3],
    },

    #[error("invalid header {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },

    #[error("guide: {0}")]
    Guide(String),

    #[error("forward cache or tape does not match the layer configuration: {0}")]
    Inconsistent(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("too few nonzero differences: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, JbfError>;

impl JbfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JbfError::Io {
            path: path.into(),
            source,
        }
    }
}
