//! Training state packed into one checkpoint file: both networks, their
//! optimizer moments and the configuration that built them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::Trainer;
use super::{TrainConfig, TrainError};
use crate::models::{Discriminator, Generator};
use crate::nn::{AdamState, Checkpoint, ParamStore, Tensor};

const GENERATOR: &str = "generator/";
const DISCRIMINATOR: &str = "discriminator/";
const G_ADAM_M: &str = "generator.adam.m/";
const G_ADAM_V: &str = "generator.adam.v/";
const D_ADAM_M: &str = "discriminator.adam.m/";
const D_ADAM_V: &str = "discriminator.adam.v/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    /// `init`, `half`, `full` or `identity`.
    pub tag: String,
    /// Completed epochs.
    pub epoch: usize,
    pub g_adam_step: u64,
    pub d_adam_step: u64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub meta: BundleMeta,
    pub generator: Generator,
    /// Absent in generator-only checkpoints.
    pub discriminator: Option<Discriminator>,
    pub g_adam: Option<AdamState>,
    pub d_adam: Option<AdamState>,
}

fn push_store(out: &mut Vec<(String, Tensor)>, prefix: &str, store: &ParamStore) {
    for p in store.params() {
        out.push((format!("{prefix}{}", p.name), p.value.clone()));
    }
}

fn push_moments(out: &mut Vec<(String, Tensor)>, prefix: &str, store: &ParamStore, moments: &[Tensor]) {
    for (p, m) in store.params().iter().zip(moments) {
        out.push((format!("{prefix}{}", p.name), m.clone()));
    }
}

fn load_moments(ck: &Checkpoint, prefix: &str, store: &ParamStore) -> Result<Option<Vec<Tensor>>, TrainError> {
    let named = ck.with_prefix(prefix);
    if named.is_empty() {
        return Ok(None);
    }
    // reuse the store's name and shape checks
    let mut probe = store.clone();
    probe.load(&named)?;
    Ok(Some(probe.values()))
}

impl Bundle {
    pub fn to_checkpoint(&self) -> Result<Checkpoint, TrainError> {
        let mut tensors = Vec::new();
        push_store(&mut tensors, GENERATOR, &self.generator.params);
        if let Some(d) = &self.discriminator {
            push_store(&mut tensors, DISCRIMINATOR, &d.params);
        }
        if let Some(a) = &self.g_adam {
            push_moments(&mut tensors, G_ADAM_M, &self.generator.params, &a.m);
            push_moments(&mut tensors, G_ADAM_V, &self.generator.params, &a.v);
        }
        if let (Some(a), Some(d)) = (&self.d_adam, &self.discriminator) {
            push_moments(&mut tensors, D_ADAM_M, &d.params, &a.m);
            push_moments(&mut tensors, D_ADAM_V, &d.params, &a.v);
        }
        Ok(Checkpoint {
            metadata: serde_json::to_value(&self.meta)?,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TrainError> {
        let meta: BundleMeta = serde_json::from_value(ck.metadata.clone())?;
        let cfg = &meta.config;
        let mut generator = Generator::new(cfg.generator.clone(), 0);
        let g_named = ck.with_prefix(GENERATOR);
        if g_named.is_empty() {
            return Err(TrainError::Data("checkpoint has no generator tensors".into()));
        }
        generator.params.load(&g_named)?;
        let d_named = ck.with_prefix(DISCRIMINATOR);
        let discriminator = if d_named.is_empty() {
            None
        } else {
            let mut d = Discriminator::new(cfg.discriminator.clone(), 0);
            d.params.load(&d_named)?;
            Some(d)
        };
        let adam = |m: Option<Vec<Tensor>>, v: Option<Vec<Tensor>>, step| match (m, v) {
            (Some(m), Some(v)) => Some(AdamState { config: cfg.adam, step, m, v }),
            _ => None,
        };
        let g_adam = adam(
            load_moments(ck, G_ADAM_M, &generator.params)?,
            load_moments(ck, G_ADAM_V, &generator.params)?,
            meta.g_adam_step,
        );
        let d_adam = match &discriminator {
            Some(d) => adam(
                load_moments(ck, D_ADAM_M, &d.params)?,
                load_moments(ck, D_ADAM_V, &d.params)?,
                meta.d_adam_step,
            ),
            None => None,
        };
        Ok(Self {
            meta,
            generator,
            discriminator,
            g_adam,
            d_adam,
        })
    }

    /// A generator that passes its input through unchanged.
    pub fn identity(config: TrainConfig) -> Self {
        Self {
            generator: Generator::identity(config.generator.clone()),
            meta: BundleMeta {
                tag: "identity".into(),
                epoch: 0,
                g_adam_step: 0,
                d_adam_step: 0,
                config,
            },
            discriminator: None,
            g_adam: None,
            d_adam: None,
        }
    }

    /// Rebuilds a trainer that resumes from this state. Missing parts start
    /// fresh.
    pub fn into_trainer(self) -> Trainer {
        let cfg = self.meta.config.clone();
        let d = self
            .discriminator
            .unwrap_or_else(|| Discriminator::new(cfg.discriminator.clone(), cfg.seed ^ 0xD15C));
        let mut t = Trainer::from_parts(cfg, self.generator, d);
        if let Some(a) = self.g_adam {
            t.g_opt = a;
        }
        if let Some(a) = self.d_adam {
            t.d_opt = a;
        }
        t
    }
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<Bundle, TrainError> {
    Bundle::from_checkpoint(&Checkpoint::load(path)?)
}

impl Trainer {
    pub fn bundle(&self, tag: &str, epoch: usize) -> Bundle {
        Bundle {
            meta: BundleMeta {
                tag: tag.into(),
                epoch,
                g_adam_step: self.g_opt.step,
                d_adam_step: self.d_opt.step,
                config: self.config.clone(),
            },
            generator: self.generator.clone(),
            discriminator: Some(self.discriminator.clone()),
            g_adam: Some(self.g_opt.clone()),
            d_adam: Some(self.d_opt.clone()),
        }
    }
}
