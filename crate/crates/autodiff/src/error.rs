use thiserror::Error;

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: buffer of length {len} cannot hold a {rows}x{cols} tensor")]
    BadLength {
        op: &'static str,
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("{op}: index {index} out of range for {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("variable {0} does not belong to this tape")]
    UnknownVar(usize),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}
