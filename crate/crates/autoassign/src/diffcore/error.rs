use thiserror::Error;

/// Errors raised by array construction and differentiable operations.
///
/// The core rejects domain violations (log of a non-positive value, division
/// by an exact zero) instead of saturating, so misuse surfaces in tests
/// rather than as NaN gradients three modules away.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiffError {
    #[error("{op}: shapes {lhs:?} and {rhs:?} are not broadcast-compatible")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: invalid shape: {detail}")]
    InvalidShape { op: &'static str, detail: String },

    #[error("{op}: domain violation: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("axis {axis} out of range for rank-{rank} array")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("{op}: operands belong to different computation records")]
    TapeMismatch { op: &'static str },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("backward requires a tracked array (constants record no nodes)")]
    UntrackedBackward,
}

pub type DiffResult<T> = Result<T, DiffError>;
