//! Non-intrusive quality metrics.
//!
//! Training treats every metric as a black box through [`QualityMetric`]:
//! the native [`SrmrMetric`] and the out-of-process [`ExternalMetric`] are
//! interchangeable. Raw scores are mapped to `[0, 1]` by [`normalize`].

pub mod external;
pub mod srmr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::Waveform;

pub use external::{ExternalMetric, ExternalMetricConfig, ExternalTarget};
pub use srmr::{srmr, SrmrConfig};

/// Default cap applied to raw SRMR before normalization.
pub const SRMR_CAP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("input too short: {len} samples, need at least {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("insufficient energy")]
    InsufficientEnergy,
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error("metric adapter timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed adapter response: {0}")]
    Protocol(String),
    #[error("metric adapter exited with {status}; stderr: {stderr}")]
    AdapterExit { status: String, stderr: String },
    #[error("metric adapter i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("http: {0}")]
    Http(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

/// How raw scores map onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    /// `min(raw, cap) / cap`, floored at 0.
    Srmr { cap: f64 },
    /// `(raw - min) / (max - min)`, clipped.
    Range { min: f64, max: f64 },
}

impl MetricKind {
    pub const SRMR: MetricKind = MetricKind::Srmr { cap: SRMR_CAP };
    /// MOS-like scales in 1–5.
    pub const MOS: MetricKind = MetricKind::Range { min: 1.0, max: 5.0 };
}

/// Maps a raw score into `[0, 1]`. Monotone non-decreasing in `raw`.
pub fn normalize(raw: f64, kind: MetricKind) -> f64 {
    let v = match kind {
        MetricKind::Srmr { cap } => raw.min(cap) / cap,
        MetricKind::Range { min, max } => (raw - min) / (max - min),
    };
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub raw: f64,
    pub normalized: f64,
}

impl MetricScore {
    pub fn new(raw: f64, kind: MetricKind) -> Self {
        Self {
            raw,
            normalized: normalize(raw, kind),
        }
    }
}

pub trait QualityMetric: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> MetricKind;

    /// Raw score of one waveform.
    fn score_raw(&self, wave: &Waveform) -> Result<f64, MetricError>;

    /// Scores several waveforms; results keep input order.
    fn score_batch(&self, waves: &[&Waveform]) -> Vec<Result<f64, MetricError>> {
        waves.iter().map(|w| self.score_raw(w)).collect()
    }

    fn score(&self, wave: &Waveform) -> Result<MetricScore, MetricError> {
        Ok(MetricScore::new(self.score_raw(wave)?, self.kind()))
    }
}

/// Native SRMR metric.
#[derive(Debug, Clone, Default)]
pub struct SrmrMetric {
    pub config: SrmrConfig,
    pub cap: Option<f64>,
}

impl SrmrMetric {
    pub fn new(config: SrmrConfig) -> Self {
        Self { config, cap: None }
    }
}

impl QualityMetric for SrmrMetric {
    fn name(&self) -> &str {
        "srmr"
    }

    fn kind(&self) -> MetricKind {
        MetricKind::Srmr {
            cap: self.cap.unwrap_or(SRMR_CAP),
        }
    }

    fn score_raw(&self, wave: &Waveform) -> Result<f64, MetricError> {
        srmr(wave, &self.config)
    }

    fn score_batch(&self, waves: &[&Waveform]) -> Vec<Result<f64, MetricError>> {
        waves
            .par_iter()
            .map(|w| srmr(w, &self.config))
            .collect()
    }
}
