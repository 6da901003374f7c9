//! The decision-directed Wiener filter on toy speech in white noise at
//! 5 dB, scored by segmental SNR.
//!
//! ```bash
//! cargo run --release -p metricgan-u --example wiener_baseline
//! ```

use metricgan_u::baselines::{wiener_enhance, WienerConfig};
use metricgan_u::dsp::{mix_at_snr, segmental_snr};
use metricgan_u::synth::toy::{synth_noise, synth_toy_clean, NoiseColor, ToySpeechConfig};

fn main() -> anyhow::Result<()> {
    let cfg = WienerConfig::default();
    let utts = synth_toy_clean(20, 8, &ToySpeechConfig::default());
    let mut total = 0.0;
    for (i, u) in utts.iter().enumerate() {
        let noise = synth_noise(NoiseColor::White, u.wave.len(), 900 + i as u64, 16000);
        let noisy = mix_at_snr(&u.wave, &noise, 5.0)?.mixture;
        let before = segmental_snr(&u.wave, &noisy)?;
        let after = segmental_snr(&u.wave, &wiener_enhance(&noisy, &cfg)?)?;
        total += after - before;
        println!("{:>8} {before:>7.2} dB -> {after:>7.2} dB", u.id);
    }
    println!("mean improvement {:.2} dB", total / utts.len() as f64);
    Ok(())
}
