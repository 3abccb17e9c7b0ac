//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix/vector dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Invalid argument value (negative threshold, zero-sized frame, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input contained NaN or infinity where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An iterative numerical routine failed to converge or diverged.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed binary file (bad magic, version, or structure).
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    /// IDX image file with an unexpected magic number.
    #[error("idx magic mismatch: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic { expected: u32, found: u32 },

    /// IDX file shorter than its header promises.
    #[error("idx payload truncated: expected {expected} bytes, found {found}")]
    IdxTruncated { expected: usize, found: usize },

    /// IDX image/label pair with inconsistent item counts.
    #[error("idx count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
