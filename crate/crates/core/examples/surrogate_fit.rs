//! Fits the discriminator to SRMR with the generator frozen, and reports
//! how well it predicts the metric on held-out utterances.
//!
//! ```bash
//! cargo run --release -p metricgan-u --example surrogate_fit
//! ```

use metricgan_u::metrics::SrmrMetric;
use metricgan_u::synth::{Split, SynthRecipe};
use metricgan_u::trainer::{prepare_all, TrainConfig, Trainer};

fn main() -> anyhow::Result<()> {
    let recipe = SynthRecipe {
        n_utterances: 28,
        n_speakers: 7,
        ..SynthRecipe::desk_reverb(5)
    };
    let utts = recipe.render()?;
    let cfg = TrainConfig::desk();
    let (train, held): (Vec<_>, Vec<_>) = utts.into_iter().partition(|u| u.entry.split == Split::Train);
    let train = prepare_all(&train, &cfg.stft, cfg.features)?;
    let held = prepare_all(&held, &cfg.stft, cfg.features)?;
    let metric = SrmrMetric::default();
    let mut t = Trainer::new(cfg)?;
    let initial = t.surrogate_error(&train, &metric)?;
    println!("{} train / {} held-out utterances", train.len(), held.len());
    println!("epoch  0: train {initial:.5}");
    for epoch in 1..=30 {
        let (loss, _) = t.train_discriminator_epoch(&train, &metric)?;
        if epoch % 5 == 0 {
            println!("epoch {epoch:2}: loss {loss:.5}");
        }
    }
    let fitted = t.surrogate_error(&train, &metric)?;
    let held_err = t.surrogate_error(&held, &metric)?;
    println!("train (D - Q')^2: {initial:.5} -> {fitted:.5} ({:.1}%)", 100.0 * fitted / initial);
    println!("held-out (D - Q')^2: {held_err:.5}");
    Ok(())
}
