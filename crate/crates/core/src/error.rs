//! Error type shared by all core modules.

use std::fmt;

/// Errors produced while building systems or running estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A frame boundary (or boundary estimate) fell outside `[0, M-1]`.
    BoundaryOutOfRange { boundary: usize, data_len: usize },
    /// A vector or matrix had the wrong dimensions for the requested operation.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    /// Not enough received samples to evaluate the requested window.
    InsufficientSamples { needed: usize, got: usize },
    /// A linear system was too ill-conditioned to solve reliably.
    IllConditioned { condition: f64 },
    /// A greedy solver re-selected an index it already holds while the
    /// residual is still significant.
    NumericalStagnation { index: usize, residual: f64 },
    /// A solver parameter failed validation.
    InvalidParameter(String),
    /// A boundary was requested from an all-zero channel estimate.
    NoBoundary,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BoundaryOutOfRange { boundary, data_len } => write!(
                f,
                "frame boundary {boundary} outside valid range [0, {}]",
                data_len.saturating_sub(1)
            ),
            Error::DimensionMismatch {
                context,
                expected,
                actual,
            } => write!(f, "{context}: expected length {expected}, got {actual}"),
            Error::InsufficientSamples { needed, got } => {
                write!(f, "need at least {needed} samples, got {got}")
            }
            Error::IllConditioned { condition } => {
                write!(f, "system ill-conditioned (condition estimate {condition:.3e})")
            }
            Error::NumericalStagnation { index, residual } => write!(
                f,
                "solver stagnated: index {index} re-selected with residual norm {residual:.3e}"
            ),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NoBoundary => write!(f, "cannot derive a boundary from an all-zero estimate"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
