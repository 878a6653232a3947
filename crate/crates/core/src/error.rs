use alloc::string::String;

/// Errors raised by problem construction and the solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension {0}: expected 1 or 2")]
    InvalidDimension(usize),
    #[error("invalid interior point count {0}: need at least 2")]
    InvalidPointCount(usize),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("step size {step} outside the stable range (0, {limit})")]
    UnstableStep { step: f64, limit: f64 },
    #[error("factorization failed: matrix is not positive definite at row {0}")]
    NotPositiveDefinite(usize),
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("adaptive horizon exceeded {0} windows")]
    WindowLimit(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
