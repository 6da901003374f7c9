use std::f64::consts::PI;

use super::{DspError, Waveform};

/// Zero crossings of the interpolation kernel on each side.
const KERNEL_ZERO_CROSSINGS: f64 = 16.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Time-scales `wave` by `ratio` with band-limited (Hann-windowed sinc)
/// interpolation, keeping the sample rate.
///
/// The output has `round(len * ratio)` samples; output sample `j` reads the
/// input at time `j / ratio`. `ratio < 1` compresses the signal, `ratio > 1`
/// dilates it. When compressing, the kernel cutoff drops to `ratio` times
/// Nyquist so the shortened signal does not alias.
pub fn resample(wave: &Waveform, ratio: f64) -> Result<Waveform, DspError> {
    if !(0.1..=10.0).contains(&ratio) || !ratio.is_finite() {
        return Err(DspError::RatioOutOfRange(ratio));
    }
    let x = wave.samples();
    let out_len = (x.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0);
    let half_width = KERNEL_ZERO_CROSSINGS / cutoff;
    let n_in = x.len() as isize;
    let out = (0..out_len)
        .map(|j| {
            let t = j as f64 / ratio;
            let lo = (t - half_width).ceil().max(0.0) as isize;
            let hi = ((t + half_width).floor() as isize).min(n_in - 1);
            let mut acc = 0.0;
            for i in lo..=hi {
                let tau = t - i as f64;
                let w = 0.5 + 0.5 * (PI * tau / half_width).cos();
                acc += x[i as usize] * cutoff * sinc(cutoff * tau) * w;
            }
            acc
        })
        .collect();
    Waveform::new(out, wave.sample_rate())
}
