//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by tensor-train operations, layers, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An index fell outside the extent of a dimension.
    #[error("index {index} out of range for dimension {dim} (extent {extent})")]
    IndexOutOfRange {
        dim: usize,
        index: usize,
        extent: usize,
    },

    /// Operand shapes are inconsistent.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A constructor or operation received an invalid argument.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A dense materialization would exceed the caller-supplied element cap.
    #[error("resource limit exceeded: {needed} scalars needed, cap is {cap}")]
    ResourceLimit { needed: usize, cap: usize },

    /// A numerical routine (SVD/QR) failed to converge.
    #[error("computation failed: {0}")]
    Computation(String),

    /// A label was outside the valid class range.
    #[error("label {label} out of range 0..{num_classes}")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// A binary file did not match its expected format.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}
