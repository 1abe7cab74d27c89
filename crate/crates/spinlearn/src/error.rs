//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A size guard was exceeded (dense builds, enumeration counts, shadow
    /// widths, and similar feasibility limits).
    #[error("{what} of size {size} exceeds the supported limit {max}")]
    TooLarge {
        what: &'static str,
        size: usize,
        max: usize,
    },

    /// An iterative solver exhausted its iteration budget.
    #[error("{what} did not converge: {detail}")]
    NoConvergence { what: &'static str, detail: String },

    /// A fitting routine produced an unusable model.
    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidInput`] with formatted text.
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
