use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Prepared;
use super::loss::{mean_squared, squared_error_to};
use super::{TrainConfig, TrainError};
use crate::dsp::{Mask, Waveform};
use crate::metrics::{MetricScore, QualityMetric};
use crate::models::{Discriminator, Generator, ModelError};
use crate::nn::{AdamState, NnError, Tape, Tensor};

pub const CURVES_FILE: &str = "curves.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.json";
pub const INIT_CHECKPOINT: &str = "init.ckpt";
/// Best validation epoch, frozen once early stopping triggers.
pub const HALF_CHECKPOINT: &str = "half.ckpt";
/// State after the last epoch.
pub const FULL_CHECKPOINT: &str = "full.ckpt";

/// Normalized metric of the unprocessed inputs, computed once per id.
#[derive(Debug, Default, Clone)]
pub struct QCache {
    scores: BTreeMap<String, Result<MetricScore, String>>,
    computed: usize,
    hits: usize,
}

impl QCache {
    /// Scores every uncached item in one batch, then returns all scores in
    /// input order.
    pub fn get(
        &mut self,
        items: &[&Prepared],
        metric: &dyn QualityMetric,
    ) -> Vec<Result<MetricScore, String>> {
        let missing: Vec<&Prepared> = {
            let mut seen = std::collections::BTreeSet::new();
            items
                .iter()
                .filter(|p| !self.scores.contains_key(&p.id) && seen.insert(p.id.clone()))
                .copied()
                .collect()
        };
        let waves: Vec<&Waveform> = missing.iter().map(|p| &p.input).collect();
        for (p, r) in missing.iter().zip(score_waves(metric, &waves)) {
            self.scores.insert(p.id.clone(), r);
            self.computed += 1;
        }
        self.hits += items.len() - missing.len();
        items.iter().map(|p| self.scores[&p.id].clone()).collect()
    }

    /// Metric evaluations performed so far.
    pub fn computed(&self) -> usize {
        self.computed
    }

    pub fn hits(&self) -> usize {
        self.hits
    }
}

fn score_waves(metric: &dyn QualityMetric, waves: &[&Waveform]) -> Vec<Result<MetricScore, String>> {
    let kind = metric.kind();
    metric
        .score_batch(waves)
        .into_iter()
        .map(|r| r.map(|raw| MetricScore::new(raw, kind)).map_err(|e| e.to_string()))
        .collect()
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Mean normalized metric of enhanced validation utterances.
    pub valid_q_enhanced: f64,
    /// Mean normalized metric of the unprocessed validation utterances.
    pub valid_q_input: f64,
    pub valid_raw_enhanced: f64,
    pub valid_raw_input: f64,
    /// Mean reconstruction penalty over the generator pass.
    pub recon_train: f64,
    /// Mean reconstruction distance on the validation set.
    pub recon_valid: f64,
    /// Utterances skipped because the metric failed on them.
    pub skipped: usize,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,d_loss,g_loss,valid_q_enhanced,valid_q_input,\
valid_raw_enhanced,valid_raw_input,recon_train,recon_valid,skipped";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.d_loss,
            self.g_loss,
            self.valid_q_enhanced,
            self.valid_q_input,
            self.valid_raw_enhanced,
            self.valid_raw_input,
            self.recon_train,
            self.recon_valid,
            self.skipped
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidStats {
    pub q_enhanced: f64,
    pub q_input: f64,
    pub raw_enhanced: f64,
    pub raw_input: f64,
    pub recon: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub records: Vec<EpochRecord>,
    /// Validation before any update.
    pub initial: Option<ValidStats>,
    pub best_epoch: Option<usize>,
    pub best_valid_q: Option<f64>,
    /// Epoch at which the best checkpoint was frozen by early stopping.
    pub early_stopped_at: Option<usize>,
    pub input_scores_computed: usize,
    pub input_score_cache_hits: usize,
}

/// Training state: both networks, their optimizers and the input-score
/// cache.
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub g_opt: AdamState,
    pub d_opt: AdamState,
    pub cache: QCache,
    pool: VecDeque<(Tensor, f64)>,
    rng: ChaCha8Rng,
}

struct DStep {
    loss: f64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let generator = Generator::new(config.generator.clone(), config.seed);
        let discriminator = Discriminator::new(config.discriminator.clone(), config.seed ^ 0xD15C);
        Ok(Self::from_parts(config, generator, discriminator))
    }

    pub fn from_parts(config: TrainConfig, generator: Generator, discriminator: Discriminator) -> Self {
        let g_opt = AdamState::new(config.adam, &generator.params);
        let d_opt = AdamState::new(config.adam, &discriminator.params);
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5117));
        Self {
            config,
            generator,
            discriminator,
            g_opt,
            d_opt,
            cache: QCache::default(),
            pool: VecDeque::new(),
            rng,
        }
    }

    /// Utterance order for one pass: a seeded shuffle, cycled to `steps`.
    fn schedule(&mut self, n: usize, steps: Option<usize>) -> Vec<usize> {
        let steps = steps.unwrap_or(n);
        let mut out = Vec::with_capacity(steps);
        while out.len() < steps {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut self.rng);
            out.extend(perm.into_iter().take(steps - out.len()));
        }
        out
    }

    fn enhanced_features(&self, p: &Prepared, mask: &Mask) -> Result<Tensor, TrainError> {
        let m = Tensor::from_rows(p.frames(), p.bins(), mask.data().to_vec())?;
        let mut tape = Tape::new();
        let mv = tape.constant(m);
        let f = self.config.features.masked_features(&mut tape, mv, &p.mag)?;
        Ok(tape.value(f).clone())
    }

    fn d_update(&mut self, samples: &[(&Tensor, f64)]) -> Result<DStep, TrainError> {
        let mut tape = Tape::new();
        let bound = self.discriminator.params.bind(&mut tape, true);
        let mut total = None;
        for (feat, q) in samples {
            let x = tape.constant((*feat).clone());
            let d = self.discriminator.forward(&mut tape, &bound, x)?;
            let e = squared_error_to(&mut tape, d, *q)?;
            total = Some(match total {
                Some(t) => tape.add(t, e)?,
                None => e,
            });
        }
        let loss = total.ok_or(TrainError::EmptyDataset)?;
        let grads = tape.backward(loss)?;
        self.discriminator.params.accumulate(&grads, &bound);
        self.d_opt.step(&mut self.discriminator.params)?;
        self.discriminator.params.zero_grad();
        Ok(DStep {
            loss: tape.value(loss).item()?,
        })
    }

    /// Fits the discriminator to the metric with the generator frozen.
    /// Returns (mean loss, skipped utterances).
    pub fn train_discriminator_epoch(
        &mut self,
        data: &[Prepared],
        metric: &dyn QualityMetric,
    ) -> Result<(f64, usize), TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let order = self.schedule(data.len(), self.config.d_steps_per_epoch);
        let mut used: Vec<usize> = order.clone();
        used.sort_unstable();
        used.dedup();
        let enhanced: BTreeMap<usize, (Mask, Waveform)> = used
            .iter()
            .map(|&i| Ok((i, data[i].enhance(&self.generator)?)))
            .collect::<Result<_, TrainError>>()?;
        let waves: Vec<&Waveform> = used.iter().map(|i| &enhanced[i].1).collect();
        let q_enh: BTreeMap<usize, Result<MetricScore, String>> =
            used.iter().copied().zip(score_waves(metric, &waves)).collect();
        let refs: Vec<&Prepared> = used.iter().map(|&i| &data[i]).collect();
        let q_in: BTreeMap<usize, Result<MetricScore, String>> =
            used.iter().copied().zip(self.cache.get(&refs, metric)).collect();

        let (mut total, mut steps, mut skipped) = (0.0, 0usize, 0usize);
        let mut last_err = String::new();
        let mut fresh = Vec::new();
        for &i in &order {
            let (qe, qi) = match (&q_enh[&i], &q_in[&i]) {
                (Ok(a), Ok(b)) => (a.normalized, b.normalized),
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!("skipping {}: metric failed: {e}", data[i].id);
                    last_err = e.clone();
                    skipped += 1;
                    continue;
                }
            };
            let fe = self.enhanced_features(&data[i], &enhanced[&i].0)?;
            let step = self
                .d_update(&[(&fe, qe), (&data[i].features, qi)])
                .map_err(|e| tag(e, &data[i].id))?;
            total += step.loss;
            steps += 1;
            fresh.push((fe, qe));
        }
        if steps == 0 {
            return Err(TrainError::MetricDown(last_err));
        }
        if self.config.history_pool > 0 {
            let replay: Vec<(Tensor, f64)> = self.pool.iter().cloned().collect();
            for (fe, q) in &replay {
                self.d_update(&[(fe, *q)])?;
            }
            for item in fresh {
                self.pool.push_back(item);
            }
            while self.pool.len() > self.config.history_pool {
                self.pool.pop_front();
            }
        }
        Ok((total / steps as f64, skipped))
    }

    /// Moves the generator towards the target score with the discriminator
    /// frozen. Returns (mean loss, mean reconstruction penalty).
    pub fn train_generator_epoch(&mut self, data: &[Prepared]) -> Result<(f64, f64), TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let order = self.schedule(data.len(), self.config.g_steps_per_epoch);
        let (mut total, mut recon_total) = (0.0, 0.0);
        for &i in &order {
            let (loss, recon) = self.g_update(&data[i]).map_err(|e| tag(e, &data[i].id))?;
            total += loss;
            recon_total += recon;
        }
        Ok((total / order.len() as f64, recon_total / order.len() as f64))
    }

    fn g_update(&mut self, p: &Prepared) -> Result<(f64, f64), TrainError> {
        let cfg = &self.config;
        let mut tape = Tape::new();
        let gb = self.generator.params.bind(&mut tape, true);
        let db = self.discriminator.params.bind(&mut tape, false);
        let x = tape.constant(p.features.clone());
        let mask = self.generator.forward(&mut tape, &gb, x)?;
        let fe = cfg.features.masked_features(&mut tape, mask, &p.mag)?;
        let d = self.discriminator.forward(&mut tape, &db, fe)?;
        let adv = squared_error_to(&mut tape, d, cfg.target_score)?;
        let recon = mean_squared(&mut tape, fe, x)?;
        let weighted = tape.scale(recon, cfg.recon_weight)?;
        let loss = tape.add(adv, weighted)?;
        let grads = tape.backward(loss)?;
        self.generator.params.accumulate(&grads, &gb);
        self.g_opt.step(&mut self.generator.params)?;
        self.generator.params.zero_grad();
        Ok((tape.value(loss).item()?, tape.value(recon).item()?))
    }

    /// Mean of `(D - Q')^2` over the enhanced and unprocessed version of
    /// each utterance. Utterances the metric fails on are left out.
    pub fn surrogate_error(&mut self, data: &[Prepared], metric: &dyn QualityMetric) -> Result<f64, TrainError> {
        let mut enhanced = Vec::with_capacity(data.len());
        for p in data {
            enhanced.push(p.enhance(&self.generator)?);
        }
        let waves: Vec<&Waveform> = enhanced.iter().map(|(_, w)| w).collect();
        let q_enh = score_waves(metric, &waves);
        let items: Vec<&Prepared> = data.iter().collect();
        let q_in = self.cache.get(&items, metric);
        let (mut total, mut n) = (0.0, 0usize);
        for (((p, (mask, _)), qe), qi) in data.iter().zip(&enhanced).zip(&q_enh).zip(&q_in) {
            if let (Ok(qe), Ok(qi)) = (qe, qi) {
                let fe = self.enhanced_features(p, mask)?;
                total += (self.discriminator.score(&fe)? - qe.normalized).powi(2);
                total += (self.discriminator.score(&p.features)? - qi.normalized).powi(2);
                n += 2;
            }
        }
        if n == 0 {
            return Err(TrainError::MetricDown("no utterance could be scored".into()));
        }
        Ok(total / n as f64)
    }

    pub fn validate(&mut self, data: &[Prepared], metric: &dyn QualityMetric) -> Result<ValidStats, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let mut waves = Vec::with_capacity(data.len());
        let mut recon = 0.0;
        for p in data {
            let (mask, wave) = p.enhance(&self.generator)?;
            let fe = self.enhanced_features(p, &mask)?;
            recon += mean_sq_diff(fe.data(), p.features.data());
            waves.push(wave);
        }
        let refs: Vec<&Waveform> = waves.iter().collect();
        let q_enh = score_waves(metric, &refs);
        let items: Vec<&Prepared> = data.iter().collect();
        let q_in = self.cache.get(&items, metric);
        let (mut n, mut skipped) = (0usize, 0usize);
        let mut acc = [0.0; 4];
        let mut last_err = String::new();
        for ((p, e), i) in data.iter().zip(&q_enh).zip(&q_in) {
            match (e, i) {
                (Ok(e), Ok(i)) => {
                    acc[0] += e.normalized;
                    acc[1] += i.normalized;
                    acc[2] += e.raw;
                    acc[3] += i.raw;
                    n += 1;
                }
                (Err(err), _) | (_, Err(err)) => {
                    log::warn!("validation: skipping {}: {err}", p.id);
                    last_err = err.clone();
                    skipped += 1;
                }
            }
        }
        if n == 0 {
            return Err(TrainError::MetricDown(last_err));
        }
        let n = n as f64;
        Ok(ValidStats {
            q_enhanced: acc[0] / n,
            q_input: acc[1] / n,
            raw_enhanced: acc[2] / n,
            raw_input: acc[3] / n,
            recon: recon / data.len() as f64,
            skipped,
        })
    }
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

fn tag(e: TrainError, id: &str) -> TrainError {
    match e {
        TrainError::Nn(source @ NnError::NonFinite { .. })
        | TrainError::Model(ModelError::Nn(source @ NnError::NonFinite { .. })) => TrainError::NonFinite {
            id: id.to_string(),
            source,
        },
        other => other,
    }
}

struct CurveWriter {
    file: fs::File,
}

impl CurveWriter {
    fn create(path: &Path) -> Result<Self, TrainError> {
        let mut file = fs::File::create(path)?;
        writeln!(file, "{}", EpochRecord::CSV_HEADER)?;
        Ok(Self { file })
    }

    /// Row 0: the untrained generator, with no losses yet.
    fn initial(&mut self, v: &ValidStats) -> Result<(), TrainError> {
        writeln!(
            self.file,
            "0,,,{},{},{},{},,{},{}",
            v.q_enhanced, v.q_input, v.raw_enhanced, v.raw_input, v.recon, v.skipped
        )?;
        self.file.flush()?;
        Ok(())
    }

    fn append(&mut self, r: &EpochRecord) -> Result<(), TrainError> {
        writeln!(self.file, "{}", r.csv_row())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Alternates discriminator and generator passes for `config.epochs`
/// epochs, validating after each.
///
/// Epochs count from 1; row 0 of `curves.csv` is the untrained generator.
/// Writes into `out_dir`: the effective config, `curves.csv`, `init.ckpt`
/// before training, `half.ckpt` at the best validation epoch (frozen once
/// the early-stopping patience runs out), `full.ckpt` after the last epoch
/// and `summary.json`.
pub fn train(
    config: TrainConfig,
    train_set: &[Prepared],
    valid_set: &[Prepared],
    metric: &dyn QualityMetric,
    out_dir: &Path,
) -> Result<TrainSummary, TrainError> {
    let mut trainer = Trainer::new(config)?;
    trainer.run(train_set, valid_set, metric, out_dir)
}

impl Trainer {
    pub fn run(
        &mut self,
        train_set: &[Prepared],
        valid_set: &[Prepared],
        metric: &dyn QualityMetric,
        out_dir: &Path,
    ) -> Result<TrainSummary, TrainError> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join(CONFIG_FILE), crate::config::to_kv(&self.config))?;
        let ckpt = |name: &str| -> PathBuf { out_dir.join(name) };
        self.bundle("init", 0).save(ckpt(INIT_CHECKPOINT))?;
        let mut curves = CurveWriter::create(&ckpt(CURVES_FILE))?;
        let mut summary = TrainSummary {
            records: Vec::new(),
            initial: None,
            best_epoch: None,
            best_valid_q: None,
            early_stopped_at: None,
            input_scores_computed: 0,
            input_score_cache_hits: 0,
        };
        if self.config.epochs > 0 {
            if train_set.is_empty() || valid_set.is_empty() {
                return Err(TrainError::EmptyDataset);
            }
            let v = self.validate(valid_set, metric)?;
            curves.initial(&v)?;
            summary.initial = Some(v);
        }
        let mut since_best = 0;
        for epoch in 1..=self.config.epochs {
            let (d_loss, skipped) = self.train_discriminator_epoch(train_set, metric)?;
            let (g_loss, recon_train) = self.train_generator_epoch(train_set)?;
            let v = self.validate(valid_set, metric)?;
            let rec = EpochRecord {
                epoch,
                d_loss,
                g_loss,
                valid_q_enhanced: v.q_enhanced,
                valid_q_input: v.q_input,
                valid_raw_enhanced: v.raw_enhanced,
                valid_raw_input: v.raw_input,
                recon_train,
                recon_valid: v.recon,
                skipped: skipped + v.skipped,
            };
            log::info!(
                "epoch {epoch}: d_loss {d_loss:.5} g_loss {g_loss:.5} valid {:.4} (input {:.4}) recon {:.4}",
                v.q_enhanced,
                v.q_input,
                v.recon
            );
            curves.append(&rec)?;
            summary.records.push(rec);
            if summary.early_stopped_at.is_none() {
                if summary.best_valid_q.is_none_or(|b| v.q_enhanced > b) {
                    summary.best_valid_q = Some(v.q_enhanced);
                    summary.best_epoch = Some(epoch);
                    since_best = 0;
                    self.bundle("half", epoch).save(ckpt(HALF_CHECKPOINT))?;
                } else {
                    since_best += 1;
                    if self.config.early_stop_patience.is_some_and(|p| since_best >= p) {
                        log::info!("early stopping: best epoch {:?}", summary.best_epoch);
                        summary.early_stopped_at = Some(epoch);
                        if self.config.halt_on_early_stop {
                            break;
                        }
                    }
                }
            }
        }
        if self.config.epochs > 0 {
            let done = summary.records.len();
            self.bundle("full", done).save(ckpt(FULL_CHECKPOINT))?;
        }
        summary.input_scores_computed = self.cache.computed();
        summary.input_score_cache_hits = self.cache.hits();
        fs::write(ckpt(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(summary)
    }
}
