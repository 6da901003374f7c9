use super::{DspError, Waveform};

/// Mean of squared samples.
pub fn signal_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

/// `10 log10(P_signal / P_noise)`.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (signal_power(signal) / signal_power(noise)).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    /// `gain * noise`, cropped or tiled to the clean length.
    pub scaled_noise: Waveform,
    pub gain: f64,
}

/// Adds `noise` to `clean` at the requested SNR.
///
/// Noise longer than the clean signal is cropped to its first `len(clean)`
/// samples; shorter noise is tiled.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture, DspError> {
    if clean.sample_rate() != noise.sample_rate() {
        return Err(DspError::SampleRateMismatch(
            clean.sample_rate(),
            noise.sample_rate(),
        ));
    }
    if !snr_db.is_finite() {
        return Err(DspError::InvalidWaveform(format!("snr_db must be finite, got {snr_db}")));
    }
    let p_clean = signal_power(clean.samples());
    if p_clean <= 0.0 {
        return Err(DspError::ZeroPower("clean"));
    }
    if noise.is_empty() {
        return Err(DspError::ZeroPower("noise"));
    }
    let fitted: Vec<f64> = noise
        .samples()
        .iter()
        .cycle()
        .take(clean.len())
        .copied()
        .collect();
    let p_noise = signal_power(&fitted);
    if p_noise <= 0.0 {
        return Err(DspError::ZeroPower("noise"));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = fitted.iter().map(|n| n * gain).collect();
    let mixed: Vec<f64> = clean
        .samples()
        .iter()
        .zip(&scaled)
        .map(|(c, n)| c + n)
        .collect();
    Ok(Mixture {
        mixture: Waveform::new(mixed, clean.sample_rate())?,
        scaled_noise: Waveform::new(scaled, clean.sample_rate())?,
        gain,
    })
}

const SEG_SNR_MIN_DB: f64 = -10.0;
const SEG_SNR_MAX_DB: f64 = 35.0;
/// Frames more than 40 dB below the loudest reference frame count as silence.
const SEG_SNR_SILENCE_DB: f64 = -40.0;

/// Frame-averaged SNR over 32 ms frames with a 16 ms hop.
///
/// Each frame's SNR is clipped to [-10, 35] dB; frames whose reference energy
/// is 40 dB below the loudest frame are skipped.
pub fn segmental_snr(reference: &Waveform, estimate: &Waveform) -> Result<f64, DspError> {
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(DspError::SampleRateMismatch(
            reference.sample_rate(),
            estimate.sample_rate(),
        ));
    }
    if reference.len() != estimate.len() {
        return Err(DspError::ShapeMismatch {
            left: (reference.len(), 1),
            right: (estimate.len(), 1),
        });
    }
    let sr = reference.sample_rate() as f64;
    let frame = ((0.032 * sr).round() as usize).max(1);
    let hop = ((0.016 * sr).round() as usize).max(1);
    let r = reference.samples();
    let e = estimate.samples();
    let starts: Vec<usize> = if r.len() <= frame {
        vec![0]
    } else {
        (0..=(r.len() - frame) / hop).map(|t| t * hop).collect()
    };
    let energies: Vec<(f64, f64)> = starts
        .iter()
        .map(|&s| {
            let end = (s + frame).min(r.len());
            let sig: f64 = r[s..end].iter().map(|x| x * x).sum();
            let err: f64 = r[s..end]
                .iter()
                .zip(&e[s..end])
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            (sig, err)
        })
        .collect();
    let max_sig = energies.iter().map(|p| p.0).fold(0.0, f64::max);
    if max_sig <= 0.0 {
        return Err(DspError::NoActiveFrames);
    }
    let threshold = max_sig * 10f64.powf(SEG_SNR_SILENCE_DB / 10.0);
    let active: Vec<f64> = energies
        .iter()
        .filter(|(sig, _)| *sig > threshold)
        .map(|(sig, err)| {
            let snr = if *err <= 0.0 {
                SEG_SNR_MAX_DB
            } else {
                10.0 * (sig / err).log10()
            };
            snr.clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
        })
        .collect();
    if active.is_empty() {
        return Err(DspError::NoActiveFrames);
    }
    Ok(active.iter().sum::<f64>() / active.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            16000,
        )
        .unwrap()
    }

    fn unit_power(w: Waveform) -> Waveform {
        let p = signal_power(w.samples());
        w.scaled(1.0 / p.sqrt())
    }

    #[test]
    fn equal_power_zero_db_gain_is_one() {
        let c = unit_power(gaussian(8000, 1));
        let n = unit_power(gaussian(8000, 2));
        let m = mix_at_snr(&c, &n, 0.0).unwrap();
        assert!((m.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hundred_db_is_nearly_clean() {
        let c = gaussian(8000, 3);
        let n = gaussian(9000, 4);
        let m = mix_at_snr(&c, &n, 100.0).unwrap();
        let num: f64 = m
            .mixture
            .samples()
            .iter()
            .zip(c.samples())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = c.samples().iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 1e-5);
    }

    #[test]
    fn five_db_gain_and_measured_snr() {
        let c = unit_power(gaussian(8000, 5));
        let n = unit_power(gaussian(8000, 6));
        let m = mix_at_snr(&c, &n, 5.0).unwrap();
        assert!((m.gain - 10f64.powf(-5.0 / 20.0)).abs() < 1e-12);
        let measured = snr_db(c.samples(), m.scaled_noise.samples());
        assert!((measured - 5.0).abs() < 1e-6);
    }

    #[test]
    fn short_noise_is_tiled() {
        let c = gaussian(1000, 7);
        let n = gaussian(300, 8);
        let m = mix_at_snr(&c, &n, 10.0).unwrap();
        assert_eq!(m.scaled_noise.len(), 1000);
        assert_eq!(m.scaled_noise.samples()[0], m.scaled_noise.samples()[300]);
    }

    #[test]
    fn zero_power_inputs() {
        let c = gaussian(100, 9);
        let z = Waveform::zeros(100, 16000);
        assert!(matches!(mix_at_snr(&z, &c, 0.0), Err(DspError::ZeroPower(_))));
        assert!(mix_at_snr(&c, &z, 0.0)
            .unwrap_err()
            .to_string()
            .contains("zero-power input"));
    }

    #[test]
    fn seg_snr_identity_hits_upper_clip() {
        let r = gaussian(16000, 10);
        assert_eq!(segmental_snr(&r, &r).unwrap(), 35.0);
    }

    #[test]
    fn seg_snr_negated_reference() {
        // error = 2 * ref in every frame -> 10 log10(1/4)
        let r = gaussian(16000, 11);
        let s = segmental_snr(&r, &r.scaled(-1.0)).unwrap();
        assert!((s - 10.0 * 0.25f64.log10()).abs() < 1e-9, "{s}");
        // a 10x overshoot reaches the lower clip
        let s = segmental_snr(&r, &r.scaled(-10.0)).unwrap();
        assert_eq!(s, -10.0);
    }

    #[test]
    fn seg_snr_equal_power_noise_near_zero() {
        let r = unit_power(gaussian(16000, 12));
        let n = unit_power(gaussian(16000, 13));
        let est: Vec<f64> = r.samples().iter().zip(n.samples()).map(|(a, b)| a + b).collect();
        let s = segmental_snr(&r, &Waveform::new(est, 16000).unwrap()).unwrap();
        assert!(s.abs() < 0.5, "{s}");
    }

    #[test]
    fn seg_snr_silent_reference() {
        let z = Waveform::zeros(2000, 16000);
        assert!(matches!(segmental_snr(&z, &z), Err(DspError::NoActiveFrames)));
    }
}
