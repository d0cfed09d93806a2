use thiserror::Error;

/// Errors raised by the quadland numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite value at sample {index} ({what})")]
    NonFiniteSample { index: usize, what: &'static str },

    #[error("non-finite {what} (step size too large or diverging iterate)")]
    NonFinite { what: &'static str },

    #[error("Lanczos iteration broke down after {restarts} restarts")]
    LanczosBreakdown { restarts: usize },
}

impl QuadError {
    /// True for failures caused by numerics rather than bad input. A
    /// non-finite input or label is bad input; a non-finite loss is not.
    pub fn is_numerical(&self) -> bool {
        match self {
            QuadError::NonFinite { .. } | QuadError::LanczosBreakdown { .. } => true,
            QuadError::NonFiniteSample { what, .. } => !matches!(*what, "input" | "label"),
            _ => false,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        QuadError::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        QuadError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, QuadError>;
