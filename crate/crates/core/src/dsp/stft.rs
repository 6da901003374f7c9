use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{DspError, Spectrogram, StftConfig, Waveform};

/// Short-time Fourier transform without padding.
///
/// Frame `t` covers samples `t*hop .. t*hop + fft_size`; the frame count is
/// `floor((len - fft_size) / hop) + 1`. Bins are the one-sided spectrum of the
/// windowed frame (unnormalized forward DFT).
pub fn stft(wave: &Waveform, cfg: &StftConfig) -> Result<Spectrogram, DspError> {
    cfg.validate()?;
    let n = cfg.fft_size;
    if wave.len() < n {
        return Err(DspError::InputTooShort {
            len: wave.len(),
            min: n,
        });
    }
    let frames = cfg.frame_count(wave.len());
    let bins = cfg.bins();
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut data = Vec::with_capacity(frames * bins);
    let samples = wave.samples();
    for t in 0..frames {
        let start = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram {
        frames,
        bins,
        data,
        config: *cfg,
        sample_rate: wave.sample_rate(),
    })
}

/// Weighted overlap-add inverse of [`stft`].
///
/// Output length is `(frames - 1) * hop + fft_size`. Each sample is divided by
/// the accumulated analysis window, so samples covered by the full COLA sum
/// reconstruct exactly; samples where the window sum vanishes are zero.
pub fn istft(spec: &Spectrogram) -> Result<Waveform, DspError> {
    let cfg = spec.config;
    cfg.validate()?;
    let deviation = cfg.cola_deviation();
    if deviation > 1e-6 {
        return Err(DspError::NonInvertibleConfig { deviation });
    }
    let n = cfg.fft_size;
    let bins = cfg.bins();
    if spec.bins != bins {
        return Err(DspError::InvalidConfig(format!(
            "spectrogram has {} bins, config implies {bins}",
            spec.bins
        )));
    }
    if spec.frames == 0 {
        return Waveform::new(Vec::new(), spec.sample_rate);
    }
    let len = (spec.frames - 1) * cfg.hop + n;
    let window = cfg.window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = vec![0.0; len];
    let mut wsum = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for t in 0..spec.frames {
        let frame = spec.frame(t);
        buf[..bins].copy_from_slice(frame);
        // Hermitian completion; DC and Nyquist imaginary parts are dropped.
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = frame[k].conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            out[start + i] += buf[i].re * scale;
            wsum[start + i] += window[i];
        }
    }
    let peak_wsum = wsum.iter().cloned().fold(0.0, f64::max);
    for (o, w) in out.iter_mut().zip(&wsum) {
        if *w > 1e-10 * peak_wsum {
            *o /= *w;
        } else {
            *o = 0.0;
        }
    }
    Waveform::new(out, spec.sample_rate)
}

/// A spectrogram of a waveform padded so every original sample lies in the
/// fully overlapped interior.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSpectrogram {
    pub spec: Spectrogram,
    /// Zeros prepended before analysis (`fft_size - hop`).
    pub front_pad: usize,
    pub original_len: usize,
}

/// Pads `fft_size - hop` zeros in front and enough zeros at the end to close
/// the last frame, then runs [`stft`].
pub fn stft_padded(wave: &Waveform, cfg: &StftConfig) -> Result<PaddedSpectrogram, DspError> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(DspError::InputTooShort {
            len: 0,
            min: 1,
        });
    }
    let front = cfg.fft_size - cfg.hop;
    let frames = (front + wave.len()).div_ceil(cfg.hop);
    let total = (frames - 1) * cfg.hop + cfg.fft_size;
    let mut padded = vec![0.0; total];
    padded[front..front + wave.len()].copy_from_slice(wave.samples());
    let spec = stft(&Waveform::new(padded, wave.sample_rate())?, cfg)?;
    Ok(PaddedSpectrogram {
        spec,
        front_pad: front,
        original_len: wave.len(),
    })
}

/// Inverts `spec` and crops back to the original waveform span.
pub fn istft_padded(
    spec: &Spectrogram,
    front_pad: usize,
    original_len: usize,
) -> Result<Waveform, DspError> {
    let full = istft(spec)?;
    if full.len() < front_pad + original_len {
        return Err(DspError::InputTooShort {
            len: full.len(),
            min: front_pad + original_len,
        });
    }
    let sr = full.sample_rate();
    let samples = full.into_samples()[front_pad..front_pad + original_len].to_vec();
    Waveform::new(samples, sr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{WindowKind, DEFAULT_SAMPLE_RATE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            DEFAULT_SAMPLE_RATE,
        )
        .unwrap()
    }

    /// Direct O(N^2) DFT of one windowed frame.
    fn dft_oracle(frame: &[f64], window: &[f64], bins: usize) -> Vec<Complex64> {
        let n = frame.len();
        (0..bins)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                    acc += Complex64::new(ang.cos(), ang.sin()) * (frame[i] * window[i]);
                }
                acc
            })
            .collect()
    }

    fn interior_rel_err(a: &[f64], b: &[f64], cfg: &StftConfig, frames: usize) -> f64 {
        let lo = cfg.fft_size - cfg.hop;
        let hi = frames * cfg.hop;
        let num: f64 = (lo..hi).map(|i| (a[i] - b[i]).powi(2)).sum();
        let den: f64 = (lo..hi).map(|i| a[i].powi(2)).sum();
        (num / den).sqrt()
    }

    #[test]
    fn frame_count_and_bins() {
        let cfg = StftConfig::default();
        let spec = stft(&noise(16000, 1), &cfg).unwrap();
        assert_eq!(spec.frames(), (16000 - 512) / 256 + 1);
        assert_eq!(spec.bins(), 257);
    }

    #[test]
    fn too_short_is_an_error() {
        let err = stft(&noise(100, 1), &StftConfig::default()).unwrap_err();
        assert!(err.to_string().contains("input too short"));
    }

    #[test]
    fn zero_waveform_gives_zero_spectrogram() {
        let spec = stft(&Waveform::zeros(2048, 16000), &StftConfig::default()).unwrap();
        assert!(spec.data().iter().all(|c| c.norm() == 0.0));
        let back = istft(&Spectrogram::zeros(5, StftConfig::default(), 16000)).unwrap();
        assert!(back.samples().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn impulse_at_frame_center_is_flat() {
        let cfg = StftConfig::default();
        let mut s = vec![0.0; 512];
        s[256] = 1.0;
        let spec = stft(&Waveform::new(s, 16000).unwrap(), &cfg).unwrap();
        // periodic Hann is 1 at its center sample
        for c in spec.frame(0) {
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sine_matches_direct_dft() {
        let cfg = StftConfig::default();
        let samples: Vec<f64> = (0..4096)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin())
            .collect();
        let wave = Waveform::new(samples.clone(), 16000).unwrap();
        let spec = stft(&wave, &cfg).unwrap();
        let window = cfg.window();
        let mut max_diff = 0.0_f64;
        for t in 0..spec.frames() {
            let frame = &samples[t * cfg.hop..t * cfg.hop + cfg.fft_size];
            let oracle = dft_oracle(frame, &window, cfg.bins());
            for (a, b) in spec.frame(t).iter().zip(&oracle) {
                max_diff = max_diff.max((a - b).norm());
            }
            let peak = spec
                .frame(t)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
                .unwrap()
                .0;
            assert_eq!(peak, 32);
        }
        assert!(max_diff < 1e-9, "max diff {max_diff}");
    }

    #[test]
    fn white_noise_round_trip() {
        let cfg = StftConfig::default();
        let wave = noise(16000, 7);
        let spec = stft(&wave, &cfg).unwrap();
        let back = istft(&spec).unwrap();
        let err = interior_rel_err(wave.samples(), back.samples(), &cfg, spec.frames());
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn chirp_round_trip() {
        let cfg = StftConfig::default();
        let samples: Vec<f64> = (0..16000)
            .map(|i| {
                let t = i as f64 / 16000.0;
                let env = 0.5 + 0.5 * (2.0 * PI * 4.0 * t).sin();
                env * (2.0 * PI * (150.0 * t + 900.0 * t * t)).sin()
            })
            .collect();
        let wave = Waveform::new(samples, 16000).unwrap();
        let spec = stft(&wave, &cfg).unwrap();
        let back = istft(&spec).unwrap();
        let err = interior_rel_err(wave.samples(), back.samples(), &cfg, spec.frames());
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn padded_round_trip_keeps_length() {
        let cfg = StftConfig::default();
        let wave = noise(12345, 3);
        let padded = stft_padded(&wave, &cfg).unwrap();
        let back = istft_padded(&padded.spec, padded.front_pad, padded.original_len).unwrap();
        assert_eq!(back.len(), wave.len());
        let num: f64 = wave
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = wave.samples().iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn istft_rejects_non_cola() {
        let cfg = StftConfig::new(512, 384, WindowKind::Hann).unwrap();
        let spec = Spectrogram::zeros(3, cfg, 16000);
        let err = istft(&spec).unwrap_err();
        assert!(err.to_string().contains("non-invertible config"));
    }

    #[test]
    fn stft_is_linear() {
        let cfg = StftConfig::default();
        let a = noise(4096, 11);
        let b = noise(4096, 12);
        let combo: Vec<f64> = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| 0.7 * x - 1.3 * y)
            .collect();
        let sa = stft(&a, &cfg).unwrap();
        let sb = stft(&b, &cfg).unwrap();
        let sc = stft(&Waveform::new(combo, 16000).unwrap(), &cfg).unwrap();
        for ((x, y), z) in sa.data().iter().zip(sb.data()).zip(sc.data()) {
            assert!((x * 0.7 - y * 1.3 - z).norm() < 1e-9);
        }
    }

    #[test]
    fn frame_parseval() {
        let cfg = StftConfig::default();
        let wave = noise(2048, 5);
        let spec = stft(&wave, &cfg).unwrap();
        let window = cfg.window();
        let n = cfg.fft_size;
        for t in 0..spec.frames() {
            let frame = &wave.samples()[t * cfg.hop..t * cfg.hop + n];
            let time_energy: f64 = frame.iter().zip(&window).map(|(x, w)| (x * w).powi(2)).sum();
            let f = spec.frame(t);
            let mut spec_energy = f[0].norm_sqr() + f[n / 2].norm_sqr();
            spec_energy += 2.0 * f[1..n / 2].iter().map(|c| c.norm_sqr()).sum::<f64>();
            spec_energy /= n as f64;
            assert!(((spec_energy - time_energy) / time_energy).abs() < 1e-6);
        }
    }
}
