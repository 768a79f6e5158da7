//! Dense-matrix reverse-mode differentiation, Adam, and a finite-difference
//! gradient checker.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error};
pub use tape::{record_forward, Gradients, Recording, Tape, Var};
pub use tensor::Tensor;

/// Negative slope used by every leaky-ReLU layer.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("optimizer state does not match parameters: {0}")]
    StateMismatch(String),
    #[error("loss evaluation failed: {0}")]
    Evaluation(String),
}
