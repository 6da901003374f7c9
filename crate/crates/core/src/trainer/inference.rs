use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::{load_bundle, Bundle};
use super::data::prepare;
use super::TrainError;
use crate::dsp::{StftConfig, Waveform};
use crate::metrics::{MetricScore, QualityMetric};
use crate::models::{FeatureTransform, Generator};

/// The inference path: STFT, features, generator mask, inverse STFT.
#[derive(Debug, Clone)]
pub struct Enhancer {
    pub generator: Generator,
    pub transform: FeatureTransform,
    pub stft: StftConfig,
}

impl Enhancer {
    pub fn from_bundle(b: &Bundle) -> Result<Self, TrainError> {
        let cfg = &b.meta.config;
        if cfg.generator.output_bins != cfg.stft.bins() {
            return Err(TrainError::Config(format!(
                "checkpoint generator has {} bins but its STFT gives {}",
                cfg.generator.output_bins,
                cfg.stft.bins()
            )));
        }
        Ok(Self {
            generator: b.generator.clone(),
            transform: cfg.features,
            stft: cfg.stft.clone(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_bundle(&load_bundle(path)?)
    }

    /// Output has the input's length and sample rate.
    pub fn enhance(&self, wave: &Waveform) -> Result<Waveform, TrainError> {
        let p = prepare("", wave, None, &self.stft, self.transform)?;
        Ok(p.enhance(&self.generator)?.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    /// `None` when the metric failed on this utterance.
    pub score: Option<MetricScore>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub metric: String,
    pub rows: Vec<EvalRow>,
}

impl EvalTable {
    fn scored(&self) -> impl Iterator<Item = &MetricScore> {
        self.rows.iter().filter_map(|r| r.score.as_ref())
    }

    /// Mean over the utterances that scored.
    pub fn mean(&self) -> Option<MetricScore> {
        let n = self.scored().count();
        (n > 0).then(|| MetricScore {
            raw: self.scored().map(|s| s.raw).sum::<f64>() / n as f64,
            normalized: self.scored().map(|s| s.normalized).sum::<f64>() / n as f64,
        })
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.score.is_none()).count()
    }

    /// `id,raw,normalized,error` with a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,raw,normalized,error\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.id,
                cell(r.score.map(|s| s.raw)),
                cell(r.score.map(|s| s.normalized)),
                err
            );
        }
        let m = self.mean();
        let _ = writeln!(
            out,
            "mean,{},{},{}",
            cell(m.map(|s| s.raw)),
            cell(m.map(|s| s.normalized)),
            if self.failures() > 0 { format!("{} failed", self.failures()) } else { String::new() }
        );
        out
    }
}

/// Scores each waveform, keeping input order.
pub fn evaluate(items: &[(&str, &Waveform)], metric: &dyn QualityMetric) -> EvalTable {
    let waves: Vec<&Waveform> = items.iter().map(|(_, w)| *w).collect();
    let kind = metric.kind();
    let rows = items
        .iter()
        .zip(metric.score_batch(&waves))
        .map(|((id, _), r)| match r {
            Ok(raw) => EvalRow {
                id: id.to_string(),
                score: Some(MetricScore::new(raw, kind)),
                error: None,
            },
            Err(e) => EvalRow {
                id: id.to_string(),
                score: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    EvalTable {
        metric: metric.name().to_string(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{istft_padded, signal_power, stft_padded};
    use crate::metrics::SrmrMetric;
    use crate::models::GeneratorSpec;
    use crate::synth::toy::{synth_toy_clean, ToySpeechConfig};
    use crate::trainer::TrainConfig;

    fn small() -> TrainConfig {
        TrainConfig {
            generator: GeneratorSpec {
                blstm_layers: 1,
                blstm_width: 4,
                dense_width: 6,
                ..GeneratorSpec::default()
            },
            ..TrainConfig::default()
        }
    }

    fn speech() -> Waveform {
        synth_toy_clean(1, 3, &ToySpeechConfig::default()).remove(0).wave
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (num / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
    }

    #[test]
    fn identity_checkpoint_reproduces_the_stft_round_trip() {
        let cfg = small();
        let e = Enhancer::from_bundle(&Bundle::identity(cfg.clone())).unwrap();
        let x = speech();
        let y = e.enhance(&x).unwrap();
        assert_eq!(y.len(), x.len());
        let p = stft_padded(&x, &cfg.stft).unwrap();
        let r = istft_padded(&p.spec, p.front_pad, p.original_len).unwrap();
        assert!(rel_l2(y.samples(), r.samples()) < 1e-6);
        assert!(rel_l2(y.samples(), x.samples()) < 1e-6);
    }

    #[test]
    fn floor_generator_scales_energy_by_floor_squared() {
        let cfg = small();
        let g = Generator::floor(cfg.generator.clone());
        let e = Enhancer {
            generator: g,
            transform: cfg.features,
            stft: cfg.stft.clone(),
        };
        let x = speech();
        let y = e.enhance(&x).unwrap();
        // masking is linear, so the floor mask is exactly a 0.05 gain
        let expected = cfg.generator.mask_floor.powi(2);
        let ratio = signal_power(y.samples()) / signal_power(x.samples());
        assert!((ratio / expected - 1.0).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn identity_scores_equal_input_scores() {
        let x = speech();
        let e = Enhancer::from_bundle(&Bundle::identity(small())).unwrap();
        let y = e.enhance(&x).unwrap();
        let m = SrmrMetric::default();
        let a = evaluate(&[("u", &x)], &m);
        let b = evaluate(&[("u", &y)], &m);
        let (a, b) = (a.rows[0].score.unwrap(), b.rows[0].score.unwrap());
        assert!((a.raw - b.raw).abs() < 1e-4);
    }

    #[test]
    fn table_format_and_determinism() {
        let x = speech();
        let silent = Waveform::zeros(x.len(), x.sample_rate());
        let m = SrmrMetric::default();
        let t = evaluate(&[("a", &x), ("b", &silent)], &m);
        assert_eq!(t.to_csv(), evaluate(&[("a", &x), ("b", &silent)], &m).to_csv());
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("b,,,"));
        assert!(lines[3].starts_with("mean,") && lines[3].ends_with("1 failed"));
        assert_eq!(t.mean().unwrap(), t.rows[0].score.unwrap());
    }
}
