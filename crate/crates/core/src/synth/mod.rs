//! Desk-scale corpora: toy clean speech, room responses and noises, the
//! reverberant and noisy sets built from them, and their manifests.

pub mod corpus;
pub mod manifest;
pub mod recipe;
pub mod toy;

use thiserror::Error;

use crate::dsp::Waveform;

pub use corpus::{
    build_noisy_set, build_reverb_set, load_corpus, render_noisy_set, render_reverb_set, reverberate,
    scale_rir, split, SplitManifests, SplitRule, SynthPlan, Utterance,
};
pub use manifest::{read_manifest, write_manifest, Degradation, ManifestEntry, Split};
pub use recipe::{CorpusKind, SynthRecipe};

/// A named signal: clean utterance, room response or noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    /// Speaker or source group; the grouping key for splits.
    pub group: String,
    pub wave: Waveform,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no {0} given")]
    Empty(&'static str),
    #[error("disjointness violated: {0}")]
    Disjointness(String),
    #[error("need at least {need} groups, have {have}")]
    TooFewGroups { have: usize, need: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("utterance {id}: cannot read {}: {reason}", path.display())]
    Missing { id: String, path: std::path::PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}
