//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Tensors are plain row-major `rows x cols` matrices. A [`Tape`] records
//! operations as they run and replays them backwards once to produce leaf
//! gradients. Everything is generic over [`Scalar`] so the same model code runs
//! in `f32` for training and in `f64` inside finite-difference oracles.

pub mod check;
mod error;
pub mod optim;
mod sparse;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use optim::{accumulate, Adam, ParamId, ParamStore};
pub use sparse::CsrMatrix;
pub use tape::{bce_logit_term, sigmoid, Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
