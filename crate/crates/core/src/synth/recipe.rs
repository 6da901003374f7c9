//! Serializable corpus recipes: toy sources by default, WAV directories
//! when given.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::{render_noisy_set, render_reverb_set, SplitRule, SynthPlan, Utterance};
use super::toy::{synth_noise_set, synth_rir_set, synth_toy_clean, ToySpeechConfig};
use super::{Source, SynthError};
use crate::dsp::wav::{read_wav, WavFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Reverb,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRecipe {
    pub kind: CorpusKind,
    /// WAV files of clean speech; the speaker group is the file stem up to
    /// the first `_`. Toy speech when absent.
    pub clean_dir: Option<PathBuf>,
    /// RIR or noise WAVs for train and valid. Toy sources when absent.
    pub degradation_dir: Option<PathBuf>,
    pub test_degradation_dir: Option<PathBuf>,
    pub n_utterances: usize,
    pub n_speakers: usize,
    pub duration_secs: f64,
    pub n_degradations: usize,
    pub n_test_degradations: usize,
    pub t60_min: f64,
    pub t60_max: f64,
    pub valid_groups: usize,
    pub test_groups: usize,
    pub seed: u64,
    pub format: WavFormat,
}

impl Default for SynthRecipe {
    fn default() -> Self {
        Self {
            kind: CorpusKind::Reverb,
            clean_dir: None,
            degradation_dir: None,
            test_degradation_dir: None,
            n_utterances: 48,
            n_speakers: 12,
            duration_secs: 2.0,
            n_degradations: 6,
            n_test_degradations: 2,
            t60_min: 0.3,
            t60_max: 0.8,
            valid_groups: 2,
            test_groups: 0,
            seed: 0,
            format: WavFormat::Float32,
        }
    }
}

/// Every `.wav` under `dir`, sorted by file name.
pub fn read_wav_dir(dir: &Path, grouped: bool) -> Result<Vec<Source>, SynthError> {
    let listing = fs::read_dir(dir).map_err(|e| {
        SynthError::Invalid(format!("cannot read directory {}: {e}", dir.display()))
    })?;
    let mut paths: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SynthError::Invalid(format!("no .wav files in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let group = if grouped {
                id.split('_').next().unwrap_or(&id).to_string()
            } else {
                id.clone()
            };
            let wave = read_wav(&p).map_err(|e| SynthError::Missing {
                id: id.clone(),
                path: p.clone(),
                reason: e.to_string(),
            })?;
            Ok(Source { id, group, wave })
        })
        .collect()
}

impl SynthRecipe {
    /// The 40 train / 8 valid reverberant set of the desk experiments.
    pub fn desk_reverb(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn plan(&self) -> Result<SynthPlan, SynthError> {
        let sr = 16_000;
        let clean = match &self.clean_dir {
            Some(d) => read_wav_dir(d, true)?,
            None => {
                let cfg = ToySpeechConfig {
                    sample_rate: sr,
                    duration_secs: self.duration_secs,
                    n_speakers: self.n_speakers,
                };
                synth_toy_clean(self.n_utterances, self.seed, &cfg)
            }
        };
        let len = clean.iter().map(|s| s.wave.len()).max().unwrap_or(0);
        let toy = |n: usize, prefix: &str, seed: u64| match self.kind {
            CorpusKind::Reverb => synth_rir_set(n, (self.t60_min, self.t60_max), prefix, seed, sr),
            CorpusKind::Noisy => synth_noise_set(n, len, prefix, seed, sr),
        };
        let degradations = match &self.degradation_dir {
            Some(d) => read_wav_dir(d, false)?,
            None => toy(self.n_degradations, "train_", self.seed.wrapping_add(1000)),
        };
        let test_degradations = match &self.test_degradation_dir {
            Some(d) => read_wav_dir(d, false)?,
            None => toy(self.n_test_degradations, "test_", self.seed.wrapping_add(2000)),
        };
        let mut plan = SynthPlan::new(clean, degradations, test_degradations);
        plan.rule = SplitRule {
            valid_groups: self.valid_groups,
            test_groups: self.test_groups,
            seed: self.seed,
        };
        plan.seed = self.seed;
        plan.format = self.format;
        Ok(plan)
    }

    pub fn render(&self) -> Result<Vec<Utterance>, SynthError> {
        let plan = self.plan()?;
        match self.kind {
            CorpusKind::Reverb => render_reverb_set(&plan),
            CorpusKind::Noisy => render_noisy_set(&plan),
        }
    }
}
