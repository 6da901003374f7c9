//! Scores toy utterances before and after reverberation with SRMR, and shows
//! how stretching the room response lowers the score.
//!
//! ```bash
//! cargo run --release -p metricgan-u --example srmr_reverb
//! ```

use metricgan_u::dsp::convolve;
use metricgan_u::metrics::{srmr, SrmrConfig};
use metricgan_u::synth::scale_rir;
use metricgan_u::synth::toy::{synth_rir, synth_toy_clean, ToySpeechConfig};

fn main() -> anyhow::Result<()> {
    let cfg = SrmrConfig::default();
    let utts = synth_toy_clean(20, 2024, &ToySpeechConfig { duration_secs: 2.0, ..Default::default() });
    let (mut wins, mut scale_wins) = (0, 0);
    println!("{:>8} {:>8} {:>8} {:>8} {:>8}", "id", "clean", "reverb", "x0.8", "x1.2");
    for (i, u) in utts.iter().enumerate() {
        let t60 = 0.3 + 0.5 * i as f64 / (utts.len() - 1) as f64;
        let rir = synth_rir(t60, 100 + i as u64, 16000);
        let clean = srmr(&u.wave, &cfg)?;
        let rev = srmr(&convolve(&u.wave, &rir)?, &cfg)?;
        let short = srmr(&convolve(&u.wave, &scale_rir(&rir, 0.8)?)?, &cfg)?;
        let long = srmr(&convolve(&u.wave, &scale_rir(&rir, 1.2)?)?, &cfg)?;
        wins += usize::from(clean > rev);
        scale_wins += usize::from(short >= long);
        println!("{:>8} {clean:>8.3} {rev:>8.3} {short:>8.3} {long:>8.3}", u.id);
    }
    println!("clean > reverberant: {wins}/20");
    println!("x0.8 >= x1.2:        {scale_wins}/20");
    Ok(())
}
