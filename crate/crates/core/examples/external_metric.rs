//! Scores the same audio natively and through an out-of-process adapter
//! speaking the line protocol. The adapter here is this crate's own
//! `metric-server`, so the two columns agree.
//!
//! ```bash
//! cargo build --release -p metricgan-u
//! cargo run --release -p metricgan-u --example external_metric [adapter command]
//! ```

use metricgan_u::metrics::{ExternalMetric, ExternalMetricConfig, QualityMetric, SrmrMetric};
use metricgan_u::synth::toy::{synth_toy_clean, ToySpeechConfig};

fn main() -> anyhow::Result<()> {
    let default = std::env::current_exe()?
        .parent()
        .and_then(|examples| examples.parent())
        .map(|dir| format!("{} metric-server", dir.join("metricgan-u").display()))
        .unwrap_or_else(|| "metricgan-u metric-server".into());
    let command = std::env::args().nth(1).unwrap_or(default);
    let mut cfg = ExternalMetricConfig::command(&command);
    cfg.raw_range = (0.0, 10.0);
    let external = ExternalMetric::new(cfg)?;
    let native = SrmrMetric::default();
    let utts = synth_toy_clean(4, 5, &ToySpeechConfig::default());
    let waves: Vec<_> = utts.iter().map(|u| &u.wave).collect();
    let a = native.score_batch(&waves);
    let b = external.score_batch(&waves);
    println!("adapter: {command}");
    for ((u, a), b) in utts.iter().zip(a).zip(b) {
        let (a, b) = (a?, b?);
        println!("{:>8} native {a:.6} external {b:.6}", u.id);
    }
    Ok(())
}
