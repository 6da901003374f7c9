//! Classical comparator: a decision-directed Wiener filter.

use serde::{Deserialize, Serialize};

use crate::dsp::{apply_mask, istft_padded, stft, stft_padded, DspError, Mask, StftConfig, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerConfig {
    /// Leading frames averaged into the noise PSD estimate.
    pub noise_frames: usize,
    /// Weight of the previous frame's estimate in the a-priori SNR.
    pub beta: f64,
    pub xi_floor_db: f64,
    pub gain_floor: f64,
    pub stft: StftConfig,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self {
            noise_frames: 6,
            beta: 0.98,
            xi_floor_db: -25.0,
            gain_floor: 0.1,
            stft: StftConfig::default(),
        }
    }
}

impl WienerConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::InvalidConfig(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta {} outside (0, 1)", self.beta));
        }
        if !(self.gain_floor > 0.0 && self.gain_floor <= 1.0) {
            return bad(format!("gain floor {} outside (0, 1]", self.gain_floor));
        }
        if !self.xi_floor_db.is_finite() {
            return bad("a-priori SNR floor must be finite".into());
        }
        if self.noise_frames == 0 {
            return bad("noise_frames must be positive".into());
        }
        self.stft.validate()
    }
}

/// Mean power per bin over the first `cfg.noise_frames` analysis frames.
pub fn estimate_noise_psd(wave: &Waveform, cfg: &WienerConfig) -> Result<Vec<f64>, DspError> {
    let need = cfg.stft.fft_size + (cfg.noise_frames - 1) * cfg.stft.hop;
    if wave.len() < need {
        return Err(DspError::InputTooShort { len: wave.len(), min: need });
    }
    let head = Waveform::new(wave.samples()[..need].to_vec(), wave.sample_rate())?;
    let spec = stft(&head, &cfg.stft)?;
    let mut psd = vec![0.0; spec.bins()];
    for t in 0..cfg.noise_frames {
        for (p, c) in psd.iter_mut().zip(spec.frame(t)) {
            *p += c.norm_sqr() / cfg.noise_frames as f64;
        }
    }
    Ok(psd)
}

/// Enhances with a noise PSD estimated from the leading frames.
pub fn wiener_enhance(wave: &Waveform, cfg: &WienerConfig) -> Result<Waveform, DspError> {
    cfg.validate()?;
    let psd = estimate_noise_psd(wave, cfg)?;
    wiener_enhance_with_psd(wave, cfg, &psd)
}

/// Per-bin gain `xi / (1 + xi)` from the decision-directed a-priori SNR
/// `xi`, floored at `cfg.gain_floor`. Bins with zero noise power pass
/// unchanged. The noisy phase is kept.
pub fn wiener_enhance_with_psd(wave: &Waveform, cfg: &WienerConfig, noise_psd: &[f64]) -> Result<Waveform, DspError> {
    cfg.validate()?;
    let padded = stft_padded(wave, &cfg.stft)?;
    let spec = &padded.spec;
    let (frames, bins) = spec.shape();
    if noise_psd.len() != bins || noise_psd.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(DspError::InvalidConfig(format!(
            "noise PSD needs {bins} finite non-negative values"
        )));
    }
    let xi_min = 10f64.powf(cfg.xi_floor_db / 10.0);
    let mut gains = Vec::with_capacity(frames * bins);
    // |S_hat|^2 of the previous frame
    let mut prev_clean = vec![0.0; bins];
    for t in 0..frames {
        for (k, x) in spec.frame(t).iter().enumerate() {
            let power = x.norm_sqr();
            let lambda = noise_psd[k];
            let gain = if lambda == 0.0 {
                1.0
            } else {
                let gamma = power / lambda;
                let ml = (gamma - 1.0).max(0.0);
                let xi = if t == 0 {
                    ml
                } else {
                    cfg.beta * prev_clean[k] / lambda + (1.0 - cfg.beta) * ml
                };
                let xi = xi.max(xi_min);
                (xi / (1.0 + xi)).max(cfg.gain_floor)
            };
            prev_clean[k] = gain * gain * power;
            gains.push(gain);
        }
    }
    let mask = Mask::new(frames, bins, gains, cfg.gain_floor)?;
    let out = apply_mask(&mask, spec)?;
    istft_padded(&out, padded.front_pad, padded.original_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mix_at_snr, segmental_snr, signal_power};
    use crate::synth::toy::{synth_noise, synth_toy_clean, NoiseColor, ToySpeechConfig};

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (num / signal_power(b) / b.len() as f64).sqrt()
    }

    #[test]
    fn zero_noise_psd_passes_input_through() {
        let cfg = WienerConfig::default();
        let x = synth_toy_clean(1, 4, &ToySpeechConfig::default()).remove(0).wave;
        let y = wiener_enhance_with_psd(&x, &cfg, &vec![0.0; cfg.stft.bins()]).unwrap();
        assert!(rel_l2(y.samples(), x.samples()) < 1e-3);
    }

    #[test]
    fn stationary_noise_is_pushed_to_the_floor() {
        let cfg = WienerConfig::default();
        let n = synth_noise(NoiseColor::White, 16000, 9, 16000);
        let y = wiener_enhance(&n, &cfg).unwrap();
        let (ein, eout) = (signal_power(n.samples()), signal_power(y.samples()));
        let bound = cfg.gain_floor.powi(2) * ein;
        // occasional bins where the noise exceeds its estimate keep a
        // little more gain; the slack covers them
        assert!(eout <= 1.5 * bound, "{eout} vs {bound}");
        assert!(eout >= 0.99 * bound);
    }

    #[test]
    fn gain_stays_in_range_and_length_is_kept() {
        let cfg = WienerConfig::default();
        let s = synth_toy_clean(1, 5, &ToySpeechConfig::default()).remove(0).wave;
        let n = synth_noise(NoiseColor::White, s.len(), 6, 16000);
        let m = mix_at_snr(&s, &n, 5.0).unwrap();
        let y = wiener_enhance(&m.mixture, &cfg).unwrap();
        assert_eq!(y.len(), m.mixture.len());
        assert_eq!(wiener_enhance(&m.mixture, &cfg).unwrap(), y);
        assert!(signal_power(y.samples()) <= signal_power(m.mixture.samples()));
    }

    #[test]
    fn improves_segmental_snr_at_5_db() {
        let cfg = WienerConfig::default();
        let utts = synth_toy_clean(5, 21, &ToySpeechConfig::default());
        let mut gain = 0.0;
        for (i, u) in utts.iter().enumerate() {
            let n = synth_noise(NoiseColor::White, u.wave.len(), 300 + i as u64, 16000);
            let m = mix_at_snr(&u.wave, &n, 5.0).unwrap();
            let y = wiener_enhance(&m.mixture, &cfg).unwrap();
            gain += segmental_snr(&u.wave, &y).unwrap() - segmental_snr(&u.wave, &m.mixture).unwrap();
        }
        assert!(gain / utts.len() as f64 >= 1.0, "{}", gain / 5.0);
    }

    #[test]
    fn rejects_bad_configs_and_short_input() {
        let short = Waveform::zeros(600, 16000);
        assert!(matches!(
            wiener_enhance(&short, &WienerConfig::default()),
            Err(DspError::InputTooShort { .. })
        ));
        let bad = WienerConfig { beta: 1.0, ..WienerConfig::default() };
        assert!(bad.validate().is_err());
    }
}
