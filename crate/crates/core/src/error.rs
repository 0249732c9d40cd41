//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numerical modules.
///
/// Shape errors carry the offending operation and the shapes involved so a
/// failure deep inside a graph is attributable.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Tensor/operator shape disagreement.
    ShapeMismatch { op: &'static str, detail: String },
    /// A precondition of an operation was violated.
    Contract { op: &'static str, detail: String },
    /// NaN/Inf or divergence where finiteness was promised.
    NonFinite { op: &'static str, detail: String },
    /// A geometric hypothesis failed (e.g. a radial difference went
    /// non-positive in a given direction).
    Hypothesis { op: &'static str, detail: String },
}

impl CoreError {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        CoreError::ShapeMismatch { op, detail }
    }

    pub(crate) fn contract(op: &'static str, detail: String) -> Self {
        CoreError::Contract { op, detail }
    }

    pub(crate) fn non_finite(op: &'static str, detail: String) -> Self {
        CoreError::NonFinite { op, detail }
    }

    pub(crate) fn hypothesis(op: &'static str, detail: String) -> Self {
        CoreError::Hypothesis { op, detail }
    }
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, detail } => {
                write!(f, "shape mismatch in `{op}`: {detail}")
            }
            CoreError::Contract { op, detail } => {
                write!(f, "contract violation in `{op}`: {detail}")
            }
            CoreError::NonFinite { op, detail } => {
                write!(f, "non-finite value in `{op}`: {detail}")
            }
            CoreError::Hypothesis { op, detail } => {
                write!(f, "hypothesis violated in `{op}`: {detail}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
