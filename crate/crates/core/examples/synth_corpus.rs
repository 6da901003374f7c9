//! Builds a small reverberant corpus on disk from toy sources and prints
//! its manifest lines.
//!
//! ```bash
//! cargo run --release -p metricgan-u --example synth_corpus [out_dir]
//! ```

use std::path::PathBuf;

use metricgan_u::synth::corpus::write_corpus;
use metricgan_u::synth::{Split, SynthRecipe};

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("synth_corpus"), PathBuf::from);
    let recipe = SynthRecipe {
        n_utterances: 12,
        n_speakers: 6,
        duration_secs: 1.0,
        test_groups: 1,
        ..SynthRecipe::desk_reverb(11)
    };
    let utts = recipe.render()?;
    let entries = write_corpus(&utts, &out, recipe.format)?;
    for split in Split::ALL {
        println!("{split}: {}", entries.iter().filter(|e| e.split == split).count());
    }
    for e in entries.iter().take(3) {
        println!("{}", serde_json::to_string(e)?);
    }
    println!("corpus in {}", out.display());
    Ok(())
}
