//! Speech-to-reverberation modulation energy ratio.
//!
//! Pipeline: a gammatone filterbank splits the signal into cochlear channels;
//! the magnitude of each channel's complex (analytic) output is its temporal
//! envelope; a bank of second-order band-pass filters splits every envelope
//! into modulation bands; windowed energies are summed over channels and time.
//! The score is the energy in the lowest `low_band_count` modulation bands
//! divided by the energy in the remaining bands. Reverberation fills in the
//! gaps between syllables, which moves envelope energy towards the higher
//! modulation bands and lowers the ratio.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::dsp::Waveform;

/// Minimum duration accepted by [`srmr`].
pub const MIN_DURATION_SECS: f64 = 0.5;
/// RMS below this is treated as silence.
pub const SILENCE_RMS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrmrConfig {
    pub n_cochlear_channels: usize,
    pub min_cochlear_hz: f64,
    /// Upper cochlear center as a fraction of the sample rate.
    pub max_cochlear_fraction: f64,
    pub modulation_centers: Vec<f64>,
    /// Quality factor of each modulation band-pass.
    pub modulation_q: f64,
    pub low_band_count: usize,
    pub window_secs: f64,
    pub step_secs: f64,
}

impl Default for SrmrConfig {
    fn default() -> Self {
        Self {
            n_cochlear_channels: 23,
            min_cochlear_hz: 125.0,
            max_cochlear_fraction: 0.4,
            modulation_centers: log_spaced(4.0, 128.0, 8),
            modulation_q: 2.0,
            low_band_count: 4,
            window_secs: 0.256,
            step_secs: 0.064,
        }
    }
}

impl SrmrConfig {
    pub fn n_modulation_bands(&self) -> usize {
        self.modulation_centers.len()
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: String| Err(MetricError::InvalidConfig(m));
        if self.n_cochlear_channels == 0 {
            return bad("n_cochlear_channels must be positive".into());
        }
        if self.low_band_count == 0 || self.low_band_count >= self.n_modulation_bands() {
            return bad(format!(
                "low_band_count {} must lie in 1..{}",
                self.low_band_count,
                self.n_modulation_bands()
            ));
        }
        if self
            .modulation_centers
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !(w[0] > 0.0))
        {
            return bad("modulation centers must be positive and strictly increasing".into());
        }
        if !(self.window_secs > 0.0 && self.step_secs > 0.0) {
            return bad("window and step must be positive".into());
        }
        if !(self.min_cochlear_hz > 0.0 && self.max_cochlear_fraction > 0.0 && self.max_cochlear_fraction < 0.5) {
            return bad("cochlear range must be positive and below Nyquist".into());
        }
        Ok(())
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

fn erb(hz: f64) -> f64 {
    24.7 * (4.37 * hz / 1000.0 + 1.0)
}

fn erb_rate(hz: f64) -> f64 {
    21.4 * (4.37 * hz / 1000.0 + 1.0).log10()
}

fn inverse_erb_rate(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

/// Channel center frequencies, equally spaced on the ERB-rate scale.
pub fn cochlear_centers(cfg: &SrmrConfig, sample_rate: u32) -> Vec<f64> {
    let lo = erb_rate(cfg.min_cochlear_hz);
    let hi = erb_rate(cfg.max_cochlear_fraction * sample_rate as f64);
    let n = cfg.n_cochlear_channels;
    if n == 1 {
        return vec![cfg.min_cochlear_hz];
    }
    (0..n)
        .map(|i| inverse_erb_rate(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Envelope of one 4th-order gammatone channel.
///
/// The signal is shifted to baseband around `center`, passed through four
/// cascaded complex one-pole low-pass sections, and the magnitude of the
/// result is the Hilbert envelope of the band-pass channel.
pub fn gammatone_envelope(x: &[f64], center: f64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let b = 1.019 * erb(center);
    let a = (-2.0 * PI * b / fs).exp();
    let gain = 1.0 - a;
    let w = 2.0 * PI * center / fs;
    let mut state = [Complex64::new(0.0, 0.0); 4];
    let rot = Complex64::new(w.cos(), -w.sin());
    let mut phasor = Complex64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(x.len());
    for (n, &s) in x.iter().enumerate() {
        let mut v = phasor * s;
        for st in state.iter_mut() {
            *st = *st * a + v * gain;
            v = *st;
        }
        out.push(2.0 * v.norm());
        phasor *= rot;
        // renormalize periodically to stop the phasor magnitude drifting
        if n % 1024 == 1023 {
            phasor /= phasor.norm();
        }
    }
    out
}

/// Second-order band-pass (constant 0 dB peak gain).
#[derive(Debug, Clone, Copy)]
struct BandPass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl BandPass {
    fn new(center: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * center / fs;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    fn filter(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b0 * x0 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

/// Energy per modulation band, summed over cochlear channels and windows.
pub fn modulation_energies(wave: &Waveform, cfg: &SrmrConfig) -> Result<Vec<f64>, MetricError> {
    cfg.validate()?;
    check_input(wave)?;
    let fs = wave.sample_rate() as f64;
    let win = ((cfg.window_secs * fs).round() as usize).max(1);
    let step = ((cfg.step_secs * fs).round() as usize).max(1);
    let hamming: Vec<f64> = (0..win)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (win - 1).max(1) as f64).cos())
        .collect();
    let filters: Vec<BandPass> = cfg
        .modulation_centers
        .iter()
        .map(|&c| BandPass::new(c, cfg.modulation_q, fs))
        .collect();
    let mut energies = vec![0.0; filters.len()];
    for center in cochlear_centers(cfg, wave.sample_rate()) {
        let env = gammatone_envelope(wave.samples(), center, wave.sample_rate());
        for (band, filt) in filters.iter().enumerate() {
            let y = filt.filter(&env);
            energies[band] += windowed_energy(&y, &hamming, step);
        }
    }
    Ok(energies)
}

fn windowed_energy(y: &[f64], window: &[f64], step: usize) -> f64 {
    let win = window.len();
    if y.len() < win {
        // a single zero-padded window
        return y.iter().zip(window).map(|(v, w)| (v * w).powi(2)).sum();
    }
    let mut total = 0.0;
    let mut start = 0;
    while start + win <= y.len() {
        total += y[start..start + win]
            .iter()
            .zip(window)
            .map(|(v, w)| (v * w).powi(2))
            .sum::<f64>();
        start += step;
    }
    total
}

fn check_input(wave: &Waveform) -> Result<(), MetricError> {
    let min = (MIN_DURATION_SECS * wave.sample_rate() as f64).ceil() as usize;
    if wave.len() < min {
        return Err(MetricError::InputTooShort {
            len: wave.len(),
            min,
        });
    }
    if wave.rms() <= SILENCE_RMS {
        return Err(MetricError::InsufficientEnergy);
    }
    Ok(())
}

/// Raw SRMR score of `wave`.
pub fn srmr(wave: &Waveform, cfg: &SrmrConfig) -> Result<f64, MetricError> {
    let e = modulation_energies(wave, cfg)?;
    let low: f64 = e[..cfg.low_band_count].iter().sum();
    let high: f64 = e[cfg.low_band_count..].iter().sum();
    if !(high > 0.0) {
        return Err(MetricError::InsufficientEnergy);
    }
    Ok(low / high)
}
