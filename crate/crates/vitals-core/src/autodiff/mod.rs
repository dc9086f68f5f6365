//! Minimal reverse-mode automatic differentiation over f64 tensors.
//!
//! A [`Tape`] records eagerly-evaluated operations in topological order;
//! [`Tape::backward`] walks the record in reverse and accumulates gradients
//! for every node that can influence a trainable leaf. The op set is exactly
//! what the vital-sign model and its spectral loss need — nothing more.
//!
//! [`gradcheck`] provides the central finite-difference verifier used by the
//! test suite to validate every backward rule.

mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{fd_check, grad_check, grad_check_subset, GradCheckReport};
pub use tape::{Pad, Tape, Var};
pub use tensor::Tensor;

use alloc::string::String;
use alloc::vec::Vec;

/// Errors surfaced by tape construction and the gradient checker.
#[derive(Debug, Clone, PartialEq)]
pub enum TapeError {
    /// Operand shapes do not conform to the op's rule.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Op invoked with an unsupported configuration (stride, padding, axis...).
    Unsupported { op: &'static str, detail: String },
    /// `backward` called on a non-scalar node.
    NonScalarLoss { shape: Vec<usize> },
    /// `backward` called twice without `reset_grads`.
    BackwardTwice,
    /// Finite-difference probe produced a non-finite forward value.
    NonFinite { op: &'static str, coord: usize },
}

impl core::fmt::Display for TapeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TapeError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{}: shape mismatch {:?} vs {:?}", op, lhs, rhs)
            }
            TapeError::Unsupported { op, detail } => write!(f, "{}: {}", op, detail),
            TapeError::NonScalarLoss { shape } => {
                write!(f, "backward: loss must be scalar, got shape {:?}", shape)
            }
            TapeError::BackwardTwice => {
                write!(f, "backward: called twice without reset_grads")
            }
            TapeError::NonFinite { op, coord } => {
                write!(f, "{}: non-finite forward value at coordinate {}", op, coord)
            }
        }
    }
}
