//! Mask-estimating generator, surrogate-metric discriminator and the
//! magnitude features both consume.

pub mod discriminator;
pub mod features;
pub mod generator;

use thiserror::Error;

use crate::nn::NnError;

pub use discriminator::{Discriminator, DiscriminatorSpec};
pub use features::FeatureTransform;
pub use generator::{Generator, GeneratorSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} frequency bins, got {got}")]
    BinMismatch { expected: usize, got: usize },
    #[error("input of {frames}x{bins} is too small; need at least {min_frames} frames and {min_bins} bins")]
    InputTooSmall {
        min_frames: usize,
        min_bins: usize,
        frames: usize,
        bins: usize,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

impl ModelError {
    /// Folds model-level errors into the autodiff error type, for closures
    /// that must return [`NnError`].
    pub fn into_nn(self) -> NnError {
        match self {
            ModelError::Nn(e) => e,
            other => NnError::Shape(other.to_string()),
        }
    }
}
