//! Supervised comparator: the same generator fitted to clean references
//! with a mean-squared spectral loss.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bundle::{Bundle, BundleMeta};
use super::data::Prepared;
use super::loss::mean_squared;
use super::{TrainConfig, TrainError};
use crate::models::Generator;
use crate::nn::{AdamState, Tape};

pub const SUPERVISED_CHECKPOINT: &str = "supervised.ckpt";
pub const SUPERVISED_CURVES: &str = "supervised_curves.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

fn clean_of(p: &Prepared) -> Result<&crate::nn::Tensor, TrainError> {
    p.clean_features
        .as_ref()
        .ok_or_else(|| TrainError::Data(format!("{}: no clean reference", p.id)))
}

/// Loss of `generator` on `p` without tracking gradients.
pub fn supervised_loss(generator: &Generator, cfg: &TrainConfig, p: &Prepared) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let bound = generator.params.bind(&mut tape, false);
    let x = tape.constant(p.features.clone());
    let mask = generator.forward(&mut tape, &bound, x)?;
    let fe = cfg.features.masked_features(&mut tape, mask, &p.mag)?;
    let y = tape.constant(clean_of(p)?.clone());
    let l = mean_squared(&mut tape, fe, y)?;
    Ok(tape.value(l).item()?)
}

fn mean_loss(g: &Generator, cfg: &TrainConfig, data: &[Prepared]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for p in data {
        total += supervised_loss(g, cfg, p)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Minimizes the mean squared distance between masked and clean features,
/// one optimizer step per utterance. Writes `supervised_curves.csv` and
/// `supervised.ckpt` into `out_dir`. The returned curve starts with the
/// untrained losses at epoch 0.
pub fn train_supervised_mse(
    cfg: &TrainConfig,
    train: &[Prepared],
    valid: &[Prepared],
    out_dir: &Path,
) -> Result<(Generator, Vec<SupervisedRecord>), TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for p in train.iter().chain(valid) {
        clean_of(p)?;
    }
    fs::create_dir_all(out_dir)?;
    let mut g = Generator::new(cfg.generator.clone(), cfg.seed);
    let mut opt = AdamState::new(cfg.adam, &g.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5E9));
    let record = |g: &Generator, epoch| -> Result<SupervisedRecord, TrainError> {
        Ok(SupervisedRecord {
            epoch,
            train_loss: mean_loss(g, cfg, train)?,
            valid_loss: if valid.is_empty() { f64::NAN } else { mean_loss(g, cfg, valid)? },
        })
    };
    let mut records = vec![record(&g, 0)?];
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for i in order {
            let p = &train[i];
            let mut tape = Tape::new();
            let bound = g.params.bind(&mut tape, true);
            let x = tape.constant(p.features.clone());
            let mask = g.forward(&mut tape, &bound, x)?;
            let fe = cfg.features.masked_features(&mut tape, mask, &p.mag)?;
            let y = tape.constant(clean_of(p)?.clone());
            let l = mean_squared(&mut tape, fe, y)?;
            let grads = tape.backward(l).map_err(|e| TrainError::NonFinite {
                id: p.id.clone(),
                source: e,
            })?;
            g.params.accumulate(&grads, &bound);
            opt.step(&mut g.params)?;
            g.params.zero_grad();
        }
        let r = record(&g, epoch)?;
        log::info!("supervised epoch {epoch}: train {:.5} valid {:.5}", r.train_loss, r.valid_loss);
        records.push(r);
    }
    let mut csv = String::from("epoch,train_loss,valid_loss\n");
    for r in &records {
        csv.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.valid_loss));
    }
    fs::write(out_dir.join(SUPERVISED_CURVES), csv)?;
    let bundle = Bundle {
        meta: BundleMeta {
            tag: "supervised".into(),
            epoch: cfg.epochs,
            g_adam_step: opt.step,
            d_adam_step: 0,
            config: cfg.clone(),
        },
        generator: g.clone(),
        discriminator: None,
        g_adam: Some(opt),
        d_adam: None,
    };
    bundle.save(out_dir.join(SUPERVISED_CHECKPOINT))?;
    Ok((g, records))
}
