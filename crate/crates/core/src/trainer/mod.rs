//! Adversarial training: the discriminator learns to predict a black-box
//! metric, and the generator learns masks the discriminator scores highly.

pub mod bundle;
pub mod data;
pub mod inference;
pub mod loss;
pub mod run;
pub mod supervised;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::StftConfig;
use crate::models::{DiscriminatorSpec, FeatureTransform, GeneratorSpec, ModelError};
use crate::nn::{AdamConfig, NnError};

pub use bundle::{load_bundle, Bundle};
pub use data::{prepare, prepare_all, Prepared};
pub use inference::{evaluate, EvalRow, EvalTable, Enhancer};
pub use loss::{discriminator_loss, generator_loss};
pub use run::{train, EpochRecord, QCache, TrainSummary, Trainer, ValidStats};
pub use supervised::train_supervised_mse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Score the generator asks the discriminator for, in (0, 1].
    pub target_score: f64,
    /// Weight of the reconstruction penalty; 0 disables it.
    pub recon_weight: f64,
    pub epochs: usize,
    /// Discriminator updates per epoch; `None` is one pass over the data.
    pub d_steps_per_epoch: Option<usize>,
    pub g_steps_per_epoch: Option<usize>,
    /// Epochs without validation improvement after which the best
    /// checkpoint is frozen; `None` keeps tracking the best to the end.
    pub early_stop_patience: Option<usize>,
    /// End training when the patience runs out instead of continuing to
    /// the full epoch budget.
    pub halt_on_early_stop: bool,
    /// Past enhanced samples replayed to the discriminator; 0 disables.
    pub history_pool: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub features: FeatureTransform,
    pub stft: StftConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            target_score: 1.0,
            recon_weight: 0.0,
            epochs: 600,
            d_steps_per_epoch: None,
            g_steps_per_epoch: None,
            early_stop_patience: Some(20),
            halt_on_early_stop: false,
            history_pool: 0,
            seed: 0,
            adam: AdamConfig::default(),
            generator: GeneratorSpec::default(),
            discriminator: DiscriminatorSpec::default(),
            features: FeatureTransform::default(),
            stft: StftConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Reduced models and a 50-epoch budget for CPU runs.
    pub fn desk() -> Self {
        Self {
            epochs: 50,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            generator: GeneratorSpec::desk(),
            discriminator: DiscriminatorSpec::desk(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.target_score > 0.0 && self.target_score <= 1.0) {
            return bad(format!("target_score {} outside (0, 1]", self.target_score));
        }
        if !(self.recon_weight >= 0.0 && self.recon_weight.is_finite()) {
            return bad(format!("recon_weight {} must be finite and >= 0", self.recon_weight));
        }
        if !(self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad(format!("invalid optimizer settings {:?}", self.adam));
        }
        if self.generator.output_bins != self.stft.bins() {
            return bad(format!(
                "generator has {} output bins but the STFT gives {}",
                self.generator.output_bins,
                self.stft.bins()
            ));
        }
        if !(self.generator.mask_floor > 0.0 && self.generator.mask_floor <= 1.0) {
            return bad(format!("mask floor {} outside (0, 1]", self.generator.mask_floor));
        }
        if self.d_steps_per_epoch == Some(0) || self.g_steps_per_epoch == Some(0) {
            return bad("steps per epoch must be positive".into());
        }
        self.stft.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("utterance {id}: {source}")]
    NonFinite { id: String, source: NnError },
    #[error("metric failed on every utterance of the epoch; last error: {0}")]
    MetricDown(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
