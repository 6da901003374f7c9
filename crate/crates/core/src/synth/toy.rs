//! Deterministic speech-like signals, room impulse responses and noises.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Source;
use crate::dsp::Waveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpeechConfig {
    pub sample_rate: u32,
    pub duration_secs: f64,
    /// Utterances are assigned round-robin to this many speakers.
    pub n_speakers: usize,
}

impl Default for ToySpeechConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            duration_secs: 1.0,
            n_speakers: 10,
        }
    }
}

const JITTER: f64 = 0.3;

struct Speaker {
    f0: f64,
    formant_scale: f64,
    rate_hz: f64,
}

fn speaker(index: usize, seed: u64) -> Speaker {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5EED_0000 + index as u64));
    Speaker {
        f0: rng.random_range(95.0..220.0),
        formant_scale: rng.random_range(0.9..1.15),
        rate_hz: rng.random_range(3.0..5.5),
    }
}

/// Speech-like test signals: a harmonic source with pitch drift, shaped by
/// three moving formant resonances and gated by a syllabic (2–8 Hz)
/// amplitude envelope with silent gaps.
pub fn synth_toy_clean(n: usize, seed: u64, cfg: &ToySpeechConfig) -> Vec<Source> {
    (0..n).map(|i| synth_one(i, seed, cfg)).collect()
}

fn synth_one(index: usize, seed: u64, cfg: &ToySpeechConfig) -> Source {
    let spk_index = index % cfg.n_speakers.max(1);
    let spk = speaker(spk_index, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
    let fs = cfg.sample_rate as f64;
    let len = (cfg.duration_secs * fs).round() as usize;

    // syllable plan: onset times with jittered spacing, each with a vowel
    let mut syllables = Vec::new();
    let mut t = rng.random_range(0.02..0.12);
    while t < cfg.duration_secs {
        let period = 1.0 / (spk.rate_hz * rng.random_range(0.8..1.25));
        let dur = period * rng.random_range(0.55..0.8);
        let formants = [
            rng.random_range(300.0..800.0) * spk.formant_scale,
            rng.random_range(900.0..2300.0) * spk.formant_scale,
            rng.random_range(2400.0..3200.0) * spk.formant_scale,
        ];
        let pitch_bend = rng.random_range(-0.12..0.12);
        syllables.push((t, dur, formants, pitch_bend));
        t += period;
    }
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let harmonic_phases: Vec<f64> = (0..128).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let bandwidths = [90.0, 130.0, 220.0];
    let formant_gains = [1.0, 0.6, 0.3];

    let mut phase = 0.0;
    let mut jitter = 0.0;
    let jitter_pole = (-2.0 * PI * 40.0 / fs).exp();
    let mut samples = Vec::with_capacity(len);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5 ^ (index as u64) << 8);
    for n in 0..len {
        let tn = n as f64 / fs;
        // active syllable and envelope
        let mut env = 0.0;
        let mut formants = syllables.first().map(|s| s.2).unwrap_or([500.0, 1500.0, 2500.0]);
        let mut bend = 0.0;
        for (start, dur, f, b) in &syllables {
            if tn >= *start && tn < start + dur {
                let x = (tn - start) / dur;
                env = (PI * x).sin().powf(0.7);
                formants = *f;
                bend = b * x;
            }
        }
        let j: f64 = noise_rng.sample(StandardNormal);
        jitter = jitter_pole * jitter + (1.0 - jitter_pole) * j;
        let f0 = spk.f0 * (1.0 + 0.06 * (2.0 * PI * 0.8 * tn + drift_phase).sin() + bend + JITTER * jitter);
        phase += 2.0 * PI * f0 / fs;
        if phase > 2.0 * PI * 1e6 {
            phase -= 2.0 * PI * 1e6;
        }
        let mut v = 0.0;
        if env > 0.0 {
            let mut k = 1;
            while (k as f64) * f0 < 0.45 * fs {
                let f = k as f64 * f0;
                let mut amp = 0.0;
                for j in 0..3 {
                    let d = (f - formants[j]) / bandwidths[j];
                    amp += formant_gains[j] / (1.0 + d * d);
                }
                v += amp / (k as f64).sqrt() * (k as f64 * phase + harmonic_phases[k % 128]).sin();
                k += 1;
            }
        }
        let breath: f64 = noise_rng.sample(StandardNormal);
        samples.push(env * v + 1e-3 * breath);
    }
    let target_rms = rng.random_range(0.08..0.2);
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / len.max(1) as f64).sqrt();
    let g = if rms > 0.0 { target_rms / rms } else { 1.0 };
    samples.iter_mut().for_each(|s| *s *= g);
    Source {
        id: format!("utt{index:04}"),
        group: format!("spk{spk_index:02}"),
        wave: Waveform::new(samples, cfg.sample_rate).expect("finite synthesis"),
    }
}

/// Exponentially decaying noise tail behind a unit direct path.
///
/// `t60` is the time for the tail envelope to fall by 60 dB; the response is
/// `t60` seconds long.
pub fn synth_rir(t60: f64, seed: u64, sample_rate: u32) -> Waveform {
    let fs = sample_rate as f64;
    let len = ((t60 * fs).round() as usize).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0052_4952);
    let predelay = (0.002 * fs) as usize;
    let decay = 6.907_755_278_982_137 / (t60 * fs);
    let tail_gain = 0.03;
    let mut h: Vec<f64> = (0..len)
        .map(|n| {
            if n < predelay {
                0.0
            } else {
                let g: f64 = rng.sample(StandardNormal);
                tail_gain * g * (-decay * n as f64).exp()
            }
        })
        .collect();
    h[0] = 1.0;
    Waveform::new(h, sample_rate).expect("finite rir")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    White,
    /// First-order low-passed white noise.
    Brown,
    /// Amplitude-modulated white noise.
    Fluctuating,
}

pub fn synth_noise(color: NoiseColor, len: usize, seed: u64, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4E4F_4953);
    let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let samples = match color {
        NoiseColor::White => white,
        NoiseColor::Brown => {
            let mut y = 0.0;
            white
                .iter()
                .map(|x| {
                    y = 0.97 * y + x;
                    y
                })
                .collect()
        }
        NoiseColor::Fluctuating => {
            let fs = sample_rate as f64;
            white
                .iter()
                .enumerate()
                .map(|(n, x)| x * (1.0 + 0.5 * (2.0 * PI * 1.3 * n as f64 / fs).sin()))
                .collect()
        }
    };
    Waveform::new(samples, sample_rate).expect("finite noise")
}

/// `n` room responses with T60 spread evenly over `t60_range`, ids
/// `{prefix}NN`. Each response is its own group.
pub fn synth_rir_set(
    n: usize,
    t60_range: (f64, f64),
    prefix: &str,
    seed: u64,
    sample_rate: u32,
) -> Vec<Source> {
    (0..n)
        .map(|i| {
            let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let t60 = t60_range.0 + frac * (t60_range.1 - t60_range.0);
            let id = format!("{prefix}{i:02}");
            Source {
                group: id.clone(),
                wave: synth_rir(t60, seed.wrapping_add(i as u64), sample_rate),
                id,
            }
        })
        .collect()
}

/// Cycles through the noise colors; ids `{prefix}NN`.
pub fn synth_noise_set(n: usize, len: usize, prefix: &str, seed: u64, sample_rate: u32) -> Vec<Source> {
    const COLORS: [NoiseColor; 3] = [NoiseColor::White, NoiseColor::Brown, NoiseColor::Fluctuating];
    (0..n)
        .map(|i| {
            let id = format!("{prefix}{i:02}");
            Source {
                group: id.clone(),
                wave: synth_noise(COLORS[i % 3], len, seed.wrapping_add(i as u64), sample_rate),
                id,
            }
        })
        .collect()
}
