//! Reverberant and noisy corpora built from clean sources, with group-disjoint
//! splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::manifest::{read_manifest, write_manifest, Degradation, ManifestEntry, Split};
use super::{Source, SynthError};
use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::dsp::{convolve, mix_at_snr, resample, Waveform};

pub const TRAIN_SCALE_FACTORS: [f64; 5] = [1.2, 1.1, 1.0, 0.9, 0.8];
pub const TEST_SCALE_FACTORS: [f64; 5] = [1.15, 1.05, 0.95, 0.85, 0.75];
pub const SNRS_DB: [f64; 4] = [15.0, 10.0, 5.0, 0.0];

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Time-scales a room response by `factor` (< 1 compresses, > 1 dilates).
///
/// Everything up to and including the direct path (the largest-magnitude
/// sample) is kept as is; the reverberant part after it is resampled. A
/// factor of exactly 1 returns the response unchanged.
pub fn scale_rir(rir: &Waveform, factor: f64) -> Result<Waveform, SynthError> {
    if factor == 1.0 {
        return Ok(rir.clone());
    }
    let h = rir.samples();
    let onset = h
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
        .0;
    let mut tail = h[onset..].to_vec();
    let direct = tail[0];
    tail[0] = 0.0;
    let stretched = resample(&Waveform::new(tail, rir.sample_rate())?, factor)?;
    let mut out = h[..onset].to_vec();
    out.extend_from_slice(stretched.samples());
    if out.len() <= onset {
        out.push(0.0);
    }
    out[onset] += direct;
    Ok(Waveform::new(out, rir.sample_rate())?)
}

/// Convolves with the scaled response; output keeps the clean length and peak.
pub fn reverberate(clean: &Waveform, rir: &Waveform, factor: f64) -> Result<Waveform, SynthError> {
    Ok(convolve(clean, &scale_rir(rir, factor)?)?)
}

/// Which groups are held out. Group order is shuffled by `seed` before the
/// first `valid_groups` go to validation and the next `test_groups` to test.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRule {
    pub valid_groups: usize,
    pub test_groups: usize,
    pub seed: u64,
}

impl Default for SplitRule {
    fn default() -> Self {
        Self {
            valid_groups: 2,
            test_groups: 0,
            seed: 0,
        }
    }
}

pub fn assign_groups<'a>(
    groups: impl IntoIterator<Item = &'a str>,
    rule: &SplitRule,
) -> Result<BTreeMap<String, Split>, SynthError> {
    let unique: BTreeSet<&str> = groups.into_iter().collect();
    let need = rule.valid_groups + rule.test_groups + 1;
    if unique.len() < need {
        return Err(SynthError::TooFewGroups {
            have: unique.len(),
            need,
        });
    }
    let mut order: Vec<&str> = unique.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rule.seed));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let split = if i < rule.valid_groups {
                Split::Valid
            } else if i < rule.valid_groups + rule.test_groups {
                Split::Test
            } else {
                Split::Train
            };
            (g.to_string(), split)
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitManifests {
    pub train: Vec<ManifestEntry>,
    pub valid: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl SplitManifests {
    pub fn get(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn counts(&self) -> [(Split, usize); 3] {
        Split::ALL.map(|s| (s, self.get(s).len()))
    }
}

/// Re-splits entries by group; each entry's `split` field is rewritten.
pub fn split(entries: &[ManifestEntry], rule: &SplitRule) -> Result<SplitManifests, SynthError> {
    let map = assign_groups(entries.iter().map(|e| e.group.as_str()), rule)?;
    let mut out = SplitManifests::default();
    for e in entries {
        let s = map[&e.group];
        let e = ManifestEntry { split: s, ..e.clone() };
        match s {
            Split::Train => out.train.push(e),
            Split::Valid => out.valid.push(e),
            Split::Test => out.test.push(e),
        }
    }
    let c = out.counts();
    log::info!("split: train {} / valid {} / test {}", c[0].1, c[1].1, c[2].1);
    check_group_disjoint(&out.train.iter().chain(&out.valid).chain(&out.test).cloned().collect::<Vec<_>>())?;
    Ok(out)
}

/// Fails if any group appears in more than one split.
pub fn check_group_disjoint(entries: &[ManifestEntry]) -> Result<(), SynthError> {
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    for e in entries {
        if let Some(prev) = seen.insert(&e.group, e.split) {
            if prev != e.split {
                return Err(SynthError::Disjointness(format!(
                    "group {} appears in both {prev} and {}",
                    e.group, e.split
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SynthPlan {
    pub clean: Vec<Source>,
    /// RIRs or noises drawn for train and valid utterances.
    pub degradations: Vec<Source>,
    /// Held-out RIRs or noises for test utterances; must not share ids with
    /// `degradations`.
    pub test_degradations: Vec<Source>,
    pub train_scale_factors: Vec<f64>,
    pub test_scale_factors: Vec<f64>,
    pub snrs_db: Vec<f64>,
    pub rule: SplitRule,
    pub seed: u64,
    pub format: WavFormat,
}

impl SynthPlan {
    pub fn new(clean: Vec<Source>, degradations: Vec<Source>, test_degradations: Vec<Source>) -> Self {
        Self {
            clean,
            degradations,
            test_degradations,
            train_scale_factors: TRAIN_SCALE_FACTORS.to_vec(),
            test_scale_factors: TEST_SCALE_FACTORS.to_vec(),
            snrs_db: SNRS_DB.to_vec(),
            rule: SplitRule::default(),
            seed: 0,
            format: WavFormat::Float32,
        }
    }

    fn validate(&self) -> Result<BTreeMap<String, Split>, SynthError> {
        if self.clean.is_empty() {
            return Err(SynthError::Empty("clean sources"));
        }
        if self.degradations.is_empty() {
            return Err(SynthError::Empty("degradation sources"));
        }
        let train_ids: BTreeSet<&str> = self.degradations.iter().map(|s| s.id.as_str()).collect();
        if let Some(shared) = self.test_degradations.iter().find(|s| train_ids.contains(s.id.as_str())) {
            return Err(SynthError::Disjointness(format!(
                "degradation source {} is in both the train and test sets",
                shared.id
            )));
        }
        let groups = assign_groups(self.clean.iter().map(|s| s.group.as_str()), &self.rule)?;
        if groups.values().any(|s| *s == Split::Test) && self.test_degradations.is_empty() {
            return Err(SynthError::Empty("test degradation sources"));
        }
        Ok(groups)
    }
}

/// One rendered corpus item.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub entry: ManifestEntry,
    pub input: Waveform,
    pub clean: Option<Waveform>,
}

fn check_set(name: &str, values: &[f64], positive: bool) -> Result<(), SynthError> {
    if values.is_empty() {
        return Err(SynthError::Invalid(format!("{name} is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || (positive && **v <= 0.0)) {
        return Err(SynthError::Invalid(format!("{name} contains {v}")));
    }
    Ok(())
}

fn entry(src: &Source, split: Split, degradation: Degradation) -> ManifestEntry {
    ManifestEntry {
        id: src.id.clone(),
        group: src.group.clone(),
        input_path: PathBuf::from(split.as_str()).join(format!("{}.wav", src.id)),
        clean_path: Some(PathBuf::from("clean").join(format!("{}.wav", src.id))),
        degradation,
        split,
    }
}

/// Draws one (RIR, scale factor) per clean utterance and renders in memory.
pub fn render_reverb_set(plan: &SynthPlan) -> Result<Vec<Utterance>, SynthError> {
    let groups = plan.validate()?;
    check_set("train scale factors", &plan.train_scale_factors, true)?;
    check_set("test scale factors", &plan.test_scale_factors, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let draws: Vec<(&Source, &Source, f64, Split)> = plan
        .clean
        .iter()
        .map(|src| {
            let split = groups[&src.group];
            let (pool, factors) = if split == Split::Test {
                (&plan.test_degradations, &plan.test_scale_factors)
            } else {
                (&plan.degradations, &plan.train_scale_factors)
            };
            let rir = &pool[rng.random_range(0..pool.len())];
            let factor = factors[rng.random_range(0..factors.len())];
            (src, rir, factor, split)
        })
        .collect();
    let out: Vec<Utterance> = draws
        .par_iter()
        .map(|&(src, rir, factor, split)| {
            Ok(Utterance {
                entry: entry(
                    src,
                    split,
                    Degradation::Reverb {
                        rir_id: rir.id.clone(),
                        scale_factor: factor,
                    },
                ),
                input: reverberate(&src.wave, &rir.wave, factor)?,
                clean: Some(src.wave.clone()),
            })
        })
        .collect::<Result<_, SynthError>>()?;
    check_group_disjoint(&out.iter().map(|u| u.entry.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Draws one (noise, SNR) per clean utterance and renders in memory.
pub fn render_noisy_set(plan: &SynthPlan) -> Result<Vec<Utterance>, SynthError> {
    let groups = plan.validate()?;
    check_set("snr set", &plan.snrs_db, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let draws: Vec<(&Source, &Source, f64, Split)> = plan
        .clean
        .iter()
        .map(|src| {
            let split = groups[&src.group];
            let pool = if split == Split::Test {
                &plan.test_degradations
            } else {
                &plan.degradations
            };
            let noise = &pool[rng.random_range(0..pool.len())];
            let snr = plan.snrs_db[rng.random_range(0..plan.snrs_db.len())];
            (src, noise, snr, split)
        })
        .collect();
    let out: Vec<Utterance> = draws
        .par_iter()
        .map(|&(src, noise, snr, split)| {
            let mix = mix_at_snr(&src.wave, &noise.wave, snr)?;
            Ok(Utterance {
                entry: entry(
                    src,
                    split,
                    Degradation::Noise {
                        source_id: noise.id.clone(),
                        snr_db: snr,
                    },
                ),
                input: mix.mixture,
                clean: Some(src.wave.clone()),
            })
        })
        .collect::<Result<_, SynthError>>()?;
    check_group_disjoint(&out.iter().map(|u| u.entry.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Writes audio under `out_dir` (`{split}/{id}.wav`, `clean/{id}.wav`), then
/// the manifest once every file has been written.
pub fn write_corpus(
    utterances: &[Utterance],
    out_dir: &Path,
    format: WavFormat,
) -> Result<Vec<ManifestEntry>, SynthError> {
    for dir in ["clean", "train", "valid", "test"] {
        fs::create_dir_all(out_dir.join(dir))?;
    }
    utterances.par_iter().try_for_each(|u| -> Result<(), SynthError> {
        write_wav(u.entry.resolved_input(out_dir), &u.input, format)?;
        if let (Some(path), Some(clean)) = (u.entry.resolved_clean(out_dir), &u.clean) {
            write_wav(path, clean, format)?;
        }
        Ok(())
    })?;
    let entries: Vec<ManifestEntry> = utterances.iter().map(|u| u.entry.clone()).collect();
    write_manifest(out_dir.join(MANIFEST_FILE), &entries)?;
    Ok(entries)
}

pub fn build_reverb_set(plan: &SynthPlan, out_dir: &Path) -> Result<Vec<ManifestEntry>, SynthError> {
    write_corpus(&render_reverb_set(plan)?, out_dir, plan.format)
}

pub fn build_noisy_set(plan: &SynthPlan, out_dir: &Path) -> Result<Vec<ManifestEntry>, SynthError> {
    write_corpus(&render_noisy_set(plan)?, out_dir, plan.format)
}

/// Loads the utterances of one split (all splits if `None`) from a manifest
/// file; paths resolve against its directory.
pub fn load_corpus(manifest: &Path, split: Option<Split>) -> Result<Vec<Utterance>, SynthError> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .into_iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| {
            let read = |p: PathBuf| {
                read_wav(&p).map_err(|err| SynthError::Missing {
                    id: e.id.clone(),
                    path: p,
                    reason: err.to_string(),
                })
            };
            let input = read(e.resolved_input(base))?;
            let clean = e.resolved_clean(base).map(read).transpose()?;
            Ok(Utterance { entry: e, input, clean })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::snr_db;
    use crate::synth::toy::{synth_noise_set, synth_rir, synth_rir_set, synth_toy_clean, ToySpeechConfig};

    fn clean(n: usize) -> Vec<Source> {
        let cfg = ToySpeechConfig {
            duration_secs: 0.5,
            ..Default::default()
        };
        synth_toy_clean(n, 11, &cfg)
    }

    fn reverb_plan() -> SynthPlan {
        let mut plan = SynthPlan::new(
            clean(20),
            synth_rir_set(4, (0.3, 0.6), "rir", 1, 16000),
            synth_rir_set(2, (0.4, 0.5), "rir_test", 2, 16000),
        );
        plan.rule = SplitRule {
            valid_groups: 2,
            test_groups: 2,
            seed: 5,
        };
        plan.seed = 9;
        plan
    }

    #[test]
    fn unit_factor_is_plain_convolution() {
        let src = &clean(1)[0];
        let rir = synth_rir(0.4, 3, 16000);
        let a = reverberate(&src.wave, &rir, 1.0).unwrap();
        let b = convolve(&src.wave, &rir).unwrap();
        let err = a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn scaling_keeps_direct_path_and_stretches_tail() {
        let mut h = vec![0.0; 8];
        h.extend(synth_rir(0.4, 4, 16000).samples());
        let rir = Waveform::new(h, 16000).unwrap();
        for f in [0.8, 1.2] {
            let s = scale_rir(&rir, f).unwrap();
            assert_eq!(s.samples()[..8], [0.0; 8]);
            assert!((s.samples()[8] - 1.0).abs() < 0.05);
            let expect = 8 + ((rir.len() - 8) as f64 * f).round() as usize;
            assert_eq!(s.len(), expect);
        }
    }

    #[test]
    fn reverb_set_is_aligned_and_disjoint() {
        let plan = reverb_plan();
        let set = render_reverb_set(&plan).unwrap();
        assert_eq!(set.len(), 20);
        for u in &set {
            let c = u.clean.as_ref().unwrap();
            assert_eq!(u.input.len(), c.len());
            assert_eq!(u.input.sample_rate(), c.sample_rate());
            let Degradation::Reverb { rir_id, scale_factor } = &u.entry.degradation else {
                panic!("noise entry in reverb set")
            };
            if u.entry.split == Split::Test {
                assert!(rir_id.starts_with("rir_test"));
                assert!(TEST_SCALE_FACTORS.contains(scale_factor));
            } else {
                assert!(!rir_id.starts_with("rir_test"));
                assert!(TRAIN_SCALE_FACTORS.contains(scale_factor));
            }
        }
        let valid_groups: BTreeSet<_> = set.iter().filter(|u| u.entry.split == Split::Valid).map(|u| &u.entry.group).collect();
        assert_eq!(valid_groups.len(), 2);
        assert!(set.iter().all(|u| u.entry.split == Split::Valid || !valid_groups.contains(&u.entry.group)));
    }

    #[test]
    fn shared_rir_is_rejected() {
        let mut plan = reverb_plan();
        plan.test_degradations.push(plan.degradations[0].clone());
        assert!(matches!(render_reverb_set(&plan), Err(SynthError::Disjointness(_))));
    }

    #[test]
    fn build_twice_is_bitwise_identical() {
        let plan = reverb_plan();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = build_reverb_set(&plan, a.path()).unwrap();
        let mb = build_reverb_set(&plan, b.path()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(
            fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
            fs::read(b.path().join(MANIFEST_FILE)).unwrap()
        );
        for e in &ma {
            assert_eq!(
                fs::read(e.resolved_input(a.path())).unwrap(),
                fs::read(e.resolved_input(b.path())).unwrap()
            );
        }
        let loaded = load_corpus(&a.path().join(MANIFEST_FILE), Some(Split::Valid)).unwrap();
        assert!(!loaded.is_empty() && loaded.iter().all(|u| u.entry.split == Split::Valid));
    }

    #[test]
    fn noisy_set_snr_is_recoverable() {
        let mut plan = SynthPlan::new(clean(8), synth_noise_set(3, 4000, "noise", 1, 16000), vec![]);
        plan.rule.test_groups = 0;
        let dir = tempfile::tempdir().unwrap();
        let entries = build_noisy_set(&plan, dir.path()).unwrap();
        for u in load_corpus(&dir.path().join(MANIFEST_FILE), None).unwrap() {
            let c = u.clean.unwrap();
            let noise: Vec<f64> = u.input.samples().iter().zip(c.samples()).map(|(m, s)| m - s).collect();
            let Degradation::Noise { snr_db: want, .. } = u.entry.degradation else { panic!() };
            let got = snr_db(c.samples(), &noise);
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert_eq!(entries.len(), 8);
    }

    #[test]
    fn noisy_smoke_and_empty_sources() {
        let mut plan = SynthPlan::new(clean(4), synth_noise_set(1, 4000, "n", 1, 16000), vec![]);
        plan.rule.valid_groups = 1;
        plan.snrs_db = vec![100.0];
        for u in render_noisy_set(&plan).unwrap() {
            let c = u.clean.unwrap();
            let d: f64 = u.input.samples().iter().zip(c.samples()).map(|(a, b)| (a - b).powi(2)).sum();
            let e: f64 = c.samples().iter().map(|a| a * a).sum();
            assert!((d / e).sqrt() < 1e-4);
        }
        plan.degradations.clear();
        assert!(matches!(render_noisy_set(&plan), Err(SynthError::Empty(_))));
    }

    #[test]
    fn split_by_group() {
        let set = render_reverb_set(&reverb_plan()).unwrap();
        let entries: Vec<ManifestEntry> = set.into_iter().map(|u| u.entry).collect();
        let rule = SplitRule {
            valid_groups: 2,
            test_groups: 0,
            seed: 77,
        };
        let s = split(&entries, &rule).unwrap();
        assert_eq!(s, split(&entries, &rule).unwrap());
        let held: BTreeSet<_> = s.valid.iter().map(|e| e.group.clone()).collect();
        assert_eq!(held.len(), 2);
        assert!(s.train.iter().all(|e| !held.contains(&e.group)));
        // 20 utterances over 10 equally sized groups: 2 groups imply 4
        let implied = entries.len() as f64 * 2.0 / 10.0;
        assert!((s.valid.len() as f64 - implied).abs() <= 1.0);
        assert!(s.test.is_empty());
        let too_many = SplitRule {
            valid_groups: 6,
            test_groups: 4,
            seed: 0,
        };
        assert!(matches!(
            split(&entries, &too_many),
            Err(SynthError::TooFewGroups { have: 10, need: 11 })
        ));
    }
}
