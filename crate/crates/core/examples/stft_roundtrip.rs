//! Analysis and resynthesis with the 512-point Hann STFT: a random signal
//! comes back unchanged, and a masked spectrogram resynthesizes at the
//! original length.
//!
//! ```bash
//! cargo run --release -p metricgan-u --example stft_roundtrip
//! ```

use metricgan_u::dsp::{apply_mask, istft_padded, stft_padded, Mask, StftConfig, Waveform};
use metricgan_u::selfcheck::stft_round_trip_error;

fn main() -> anyhow::Result<()> {
    let cfg = StftConfig::default();
    println!("fft {} hop {} bins {}", cfg.fft_size, cfg.hop, cfg.bins());
    println!("worst interior relative L2 over 10 signals: {:.2e}", stft_round_trip_error(10, 1));

    let tone: Vec<f64> = (0..12_345).map(|n| (n as f64 * 0.07).sin()).collect();
    let x = Waveform::new(tone, 16000)?;
    let p = stft_padded(&x, &cfg)?;
    let (frames, bins) = p.spec.shape();
    let half = Mask::new(frames, bins, vec![0.5; frames * bins], 0.05)?;
    let y = istft_padded(&apply_mask(&half, &p.spec)?, p.front_pad, p.original_len)?;
    let ratio = y.samples()[6000] / x.samples()[6000];
    println!("{} samples -> {frames} frames -> {} samples; 0.5 mask scales by {ratio:.6}", x.len(), y.len());
    Ok(())
}
