//! Tape-based reverse-mode autodiff over dense f64 tensors, plus the Adam
//! optimizer and a finite-difference gradient checker.

pub mod adam;
pub mod check;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState, ParamSet};
pub use check::{grad_check, grad_check_params, max_rel_err};
pub use tape::{Grads, Tape, Var};
pub use tensor::{matmul, matmul_nt, matmul_tn, transpose, Tensor};

use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdError {
    /// Operands with incompatible shapes (op, lhs shape, rhs shape).
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A matrix op applied to a non-2-D tensor.
    NotMatrix(&'static str),
    /// backward() called on a node that is not a single scalar.
    NonScalarLoss(Vec<usize>),
    /// NaN or Inf entering the graph.
    NonFinite(&'static str),
    /// Row/column index outside its bound (op, index, bound).
    BadIndex {
        op: &'static str,
        index: usize,
        bound: usize,
    },
}

impl fmt::Display for AdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            AdError::NotMatrix(op) => write!(f, "{op}: operand is not a matrix"),
            AdError::NonScalarLoss(shape) => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            AdError::NonFinite(op) => write!(f, "{op}: non-finite value at graph boundary"),
            AdError::BadIndex { op, index, bound } => {
                write!(f, "{op}: index {index} out of bound {bound}")
            }
        }
    }
}

impl core::error::Error for AdError {}
