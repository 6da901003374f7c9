//! Unsupervised dereverberation at desk scale: 40 training and 8
//! validation toy utterances, SRMR as the only training signal, and a
//! reconstruction penalty keeping the output close to the input.
//!
//! ```bash
//! cargo run --release -p metricgan-u --example dereverb_desk [out_dir] [epochs]
//! ```

use std::path::PathBuf;

use metricgan_u::metrics::SrmrMetric;
use metricgan_u::synth::{Split, SynthRecipe};
use metricgan_u::trainer::{prepare_all, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("dereverb_desk"), PathBuf::from);
    let mut cfg = TrainConfig {
        recon_weight: 0.6,
        ..TrainConfig::desk()
    };
    if let Some(e) = args.next() {
        cfg.epochs = e.parse()?;
    }
    let utts = SynthRecipe::desk_reverb(7).render()?;
    let pick = |s: Split| -> Vec<_> { utts.iter().filter(|u| u.entry.split == s).cloned().collect() };
    let train_set = prepare_all(&pick(Split::Train), &cfg.stft, cfg.features)?;
    let valid_set = prepare_all(&pick(Split::Valid), &cfg.stft, cfg.features)?;
    let summary = train(cfg, &train_set, &valid_set, &SrmrMetric::default(), &out)?;

    let input = summary.initial.as_ref().map_or(f64::NAN, |v| v.raw_input);
    let best = summary
        .records
        .iter()
        .max_by(|a, b| a.valid_q_enhanced.total_cmp(&b.valid_q_enhanced))
        .expect("at least one epoch");
    println!("reverberant validation SRMR: {input:.3}");
    println!(
        "best epoch {}: SRMR {:.3} ({:+.1}%), reconstruction {:.3}",
        best.epoch,
        best.valid_raw_enhanced,
        100.0 * (best.valid_raw_enhanced / input - 1.0),
        best.recon_valid
    );
    println!("curves and checkpoints in {}", out.display());
    Ok(())
}
