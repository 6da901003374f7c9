//! Small reverse-mode autodiff core: tensors, a tape of ops, LSTM and dense
//! layers built from those ops, Adam, finite-difference checking and a
//! checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GRAD_CHECK_FLOOR};
pub use layers::{bilstm, linear, lstm, LstmWeights};
pub use params::{kaiming_uniform, uniform_fan_in, Param, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{0}")]
    Shape(String),
    #[error("non-finite value produced by {op} during {phase}")]
    NonFinite { op: &'static str, phase: &'static str },
    #[error("recurrence diverged")]
    RecurrenceDiverged,
    #[error("expected a one-element tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{0}")]
    Domain(&'static str),
    #[error("input too small: need at least {need:?} (rows, cols), got {got:?}")]
    InputTooSmall {
        need: (usize, usize),
        got: (usize, usize),
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
