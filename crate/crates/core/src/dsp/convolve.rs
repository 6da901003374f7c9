use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{DspError, Waveform};

/// Full linear convolution (`len(a) + len(b) - 1` samples) via FFT.
pub fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    // Short kernels are cheaper and exact in the time domain.
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, x) in a.iter().enumerate() {
            for (j, h) in b.iter().enumerate() {
                out[i + j] += x * h;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Convolves `wave` with a room impulse response.
///
/// The full convolution is trimmed to the input length and rescaled so its
/// peak equals the input peak. A silent result is returned unscaled.
pub fn convolve(wave: &Waveform, rir: &Waveform) -> Result<Waveform, DspError> {
    if wave.sample_rate() != rir.sample_rate() {
        return Err(DspError::SampleRateMismatch(
            wave.sample_rate(),
            rir.sample_rate(),
        ));
    }
    let mut out = convolve_full(wave.samples(), rir.samples());
    out.truncate(wave.len());
    let in_peak = wave.peak();
    let out_peak = out.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if out_peak > 0.0 {
        let g = in_peak / out_peak;
        out.iter_mut().for_each(|s| *s *= g);
    }
    Waveform::new(out, wave.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct-sum convolution followed by the same trim and peak policy.
    fn oracle(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (n, slot) in y.iter_mut().enumerate() {
            for (k, hk) in h.iter().enumerate() {
                if k <= n {
                    *slot += hk * x[n - k];
                }
            }
        }
        let pin = x.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        let pout = y.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        y.iter().map(|s| s * pin / pout).collect()
    }

    #[test]
    fn unit_impulse_is_identity() {
        let x = Waveform::new(random(1000, 1), 16000).unwrap();
        let rir = Waveform::new(vec![1.0], 16000).unwrap();
        let y = convolve(&x, &rir).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delayed_impulse_shifts() {
        let mut s = vec![0.0; 500];
        s[100] = 0.8;
        s[200] = -0.3;
        let x = Waveform::new(s.clone(), 16000).unwrap();
        let mut h = vec![0.0; 40];
        h[37] = 1.0;
        let y = convolve(&x, &Waveform::new(h, 16000).unwrap()).unwrap();
        for n in 0..500 {
            let expected = if n >= 37 { s[n - 37] } else { 0.0 };
            assert!((y.samples()[n] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_sum_oracle() {
        let x = random(3000, 2);
        let h = random(64, 3);
        let y = convolve(
            &Waveform::new(x.clone(), 16000).unwrap(),
            &Waveform::new(h.clone(), 16000).unwrap(),
        )
        .unwrap();
        let o = oracle(&x, &h);
        let max = y
            .samples()
            .iter()
            .zip(&o)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max < 1e-9, "max diff {max}");
    }

    #[test]
    fn fft_path_matches_direct_path() {
        let a = random(700, 4);
        let b = random(300, 5);
        let fast = convolve_full(&a, &b);
        let mut direct = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, h) in b.iter().enumerate() {
                direct[i + j] += x * h;
            }
        }
        for (p, q) in fast.iter().zip(&direct) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn argument_swap_commutes_on_equal_lengths() {
        let a = Waveform::new(random(256, 6), 16000).unwrap();
        let b = Waveform::new(random(256, 7), 16000).unwrap();
        let ab = convolve_full(a.samples(), b.samples());
        let ba = convolve_full(b.samples(), a.samples());
        for (p, q) in ab.iter().zip(&ba) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_rate_mismatch() {
        let a = Waveform::new(vec![1.0; 10], 16000).unwrap();
        let b = Waveform::new(vec![1.0; 3], 8000).unwrap();
        assert!(matches!(
            convolve(&a, &b),
            Err(DspError::SampleRateMismatch(16000, 8000))
        ));
    }
}
