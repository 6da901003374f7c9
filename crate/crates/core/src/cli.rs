//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::baselines::{wiener_enhance, WienerConfig};
use crate::config::{apply, env_pairs, read_kv, to_kv};
use crate::dsp::segmental_snr;
use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::metrics::external::serve;
use crate::metrics::{srmr, ExternalMetric, ExternalMetricConfig, QualityMetric, SrmrConfig, SrmrMetric};
use crate::synth::corpus::write_corpus;
use crate::synth::{load_corpus, write_manifest, ManifestEntry, Split, SynthRecipe, Utterance};
use crate::trainer::supervised::train_supervised_mse;
use crate::trainer::{evaluate, prepare_all, train, Enhancer, TrainConfig};

/// A problem with how the program was invoked rather than with the work.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Parser)]
#[command(name = "metricgan-u", version, about = "Unsupervised speech enhancement trained against a black-box quality metric")]
pub struct Cli {
    /// Worker threads for metric scoring and synthesis; 1 is fully
    /// deterministic, 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a reverberant or noisy corpus and its manifests.
    Synth(SynthArgs),
    /// Train the enhancer against a metric.
    Train(TrainArgs),
    /// Enhance one file or every entry of a manifest.
    Enhance(EnhanceArgs),
    /// Score a manifest split, optionally after enhancement.
    Eval(EvalArgs),
    /// Run the Wiener-filter baseline over a manifest split.
    Baseline(BaselineArgs),
    /// Run the built-in verification battery.
    Selfcheck(SelfcheckArgs),
    /// Serve SRMR over the external-metric line protocol on stdin/stdout.
    MetricServer(MetricServerArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key (repeatable); wins over the file and `MGU_*`
    /// environment variables.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    /// file < environment < `--set` < `extra` (dedicated flags).
    fn resolve<T: Serialize + DeserializeOwned>(&self, base: T, extra: Vec<(String, String)>) -> Result<T> {
        let mut pairs = match &self.config {
            Some(p) => read_kv(p)?,
            None => Vec::new(),
        };
        pairs.extend(env_pairs(&base, std::env::vars()));
        for s in &self.set {
            let Some((k, v)) = s.split_once('=') else {
                return usage(format!("--set expects KEY=VALUE, got {s:?}"));
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.extend(extra);
        apply(&base, &pairs).map_err(|e| UsageError(e.to_string()).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    Srmr,
    External,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long, value_enum, default_value_t = MetricChoice::Srmr)]
    pub metric: MetricChoice,
    /// Adapter command line for `--metric external`.
    #[arg(long)]
    pub adapter: Option<String>,
    /// HTTP endpoint for `--metric external`.
    #[arg(long, conflicts_with = "adapter")]
    pub endpoint: Option<String>,
    /// Raw score range mapped onto [0, 1] for external metrics.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [1.0, 5.0])]
    pub raw_range: Vec<f64>,
    #[arg(long, default_value_t = 30.0)]
    pub adapter_timeout: f64,
    #[arg(long, default_value_t = 1)]
    pub adapter_workers: usize,
}

impl MetricArgs {
    pub fn build(&self) -> Result<Box<dyn QualityMetric>> {
        match self.metric {
            MetricChoice::Srmr => Ok(Box::new(SrmrMetric::default())),
            MetricChoice::External => {
                let mut cfg = match (&self.adapter, &self.endpoint) {
                    (Some(cmd), None) => ExternalMetricConfig::command(cmd),
                    (None, Some(url)) => ExternalMetricConfig::endpoint(url),
                    _ => return usage("--metric external needs --adapter or --endpoint"),
                };
                cfg.raw_range = (self.raw_range[0], self.raw_range[1]);
                if !(self.adapter_timeout > 0.0) {
                    return usage("--adapter-timeout must be positive");
                }
                cfg.timeout = Duration::from_secs_f64(self.adapter_timeout);
                cfg.workers = self.adapter_workers;
                cfg.validate().map_err(|e| UsageError(e.to_string()))?;
                Ok(Box::new(ExternalMetric::new(cfg)?))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Recipe as a flat key-value file; toy sources unless directories are
    /// given.
    #[arg(long = "plan")]
    pub plan: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest with train and valid entries.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Start from the reduced desk-scale models instead of the full ones.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub recon_weight: Option<f64>,
    #[arg(long)]
    pub target_score: Option<f64>,
    /// Train the supervised MSE comparator on clean references instead.
    #[arg(long)]
    pub supervised: bool,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, requires = "output", conflicts_with = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Enhance every entry; outputs are `<out-dir>/<id>.wav`.
    #[arg(long, requires = "out_dir")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    /// Score the enhanced signals from this checkpoint instead of the
    /// inputs.
    #[arg(long, conflicts_with = "clean")]
    pub checkpoint: Option<PathBuf>,
    /// Score the clean references instead of the inputs.
    #[arg(long)]
    pub clean: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Sabotage the named gradient check (for testing the harness).
    #[arg(long, value_name = "OP")]
    pub corrupt: Option<String>,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricServerArgs {}

fn echo_config<T: Serialize>(dir: &Path, name: &str, cfg: &T) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(name), to_kv(cfg)).with_context(|| format!("writing {name}"))?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut pairs = match &a.plan {
        Some(p) => read_kv(p)?,
        None => Vec::new(),
    };
    for s in &a.set {
        let Some((k, v)) = s.split_once('=') else {
            return usage(format!("--set expects KEY=VALUE, got {s:?}"));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = a.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    let recipe: SynthRecipe = apply(&SynthRecipe::default(), &pairs).map_err(|e| UsageError(e.to_string()))?;
    let utts = recipe.render()?;
    let entries = write_corpus(&utts, &a.out, recipe.format)?;
    for split in Split::ALL {
        let part: Vec<ManifestEntry> = entries.iter().filter(|e| e.split == split).cloned().collect();
        write_manifest(a.out.join(format!("{split}.jsonl")), &part)?;
        log::info!("{split}: {} utterances", part.len());
    }
    echo_config(&a.out, "synth_config.txt", &recipe)?;
    println!("wrote {} utterances to {}", entries.len(), a.out.display());
    Ok(())
}

fn load(manifest: &Path, split: Option<Split>) -> Result<Vec<Utterance>> {
    let utts = load_corpus(manifest, split).with_context(|| format!("loading {}", manifest.display()))?;
    if utts.is_empty() {
        bail!("{} has no entries{}", manifest.display(), split.map(|s| format!(" in split {s}")).unwrap_or_default());
    }
    Ok(utts)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let base = if a.desk { TrainConfig::desk() } else { TrainConfig::default() };
    let mut flags = Vec::new();
    if let Some(e) = a.epochs {
        flags.push(("epochs".to_string(), e.to_string()));
    }
    if let Some(s) = a.seed {
        flags.push(("seed".to_string(), s.to_string()));
    }
    if let Some(r) = a.recon_weight {
        flags.push(("recon_weight".to_string(), r.to_string()));
    }
    if let Some(s) = a.target_score {
        flags.push(("target_score".to_string(), s.to_string()));
    }
    let cfg: TrainConfig = a.config.resolve(base, flags)?;
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let train_utts = load(&a.manifest, Some(Split::Train))?;
    let valid_utts = load(&a.manifest, Some(Split::Valid))?;
    let train_set = prepare_all(&train_utts, &cfg.stft, cfg.features)?;
    let valid_set = prepare_all(&valid_utts, &cfg.stft, cfg.features)?;
    if a.supervised {
        echo_config(&a.out, "config.txt", &cfg)?;
        let (_, records) = train_supervised_mse(&cfg, &train_set, &valid_set, &a.out)?;
        let last = records.last().expect("initial record");
        println!("supervised: train loss {:.5}, valid loss {:.5}", last.train_loss, last.valid_loss);
        return Ok(());
    }
    let metric = a.metric.build()?;
    let summary = train(cfg, &train_set, &valid_set, metric.as_ref(), &a.out)?;
    match (&summary.initial, summary.best_epoch, summary.best_valid_q) {
        (Some(init), Some(epoch), Some(q)) => println!(
            "best epoch {epoch}: validation {q:.4} (input {:.4}); outputs in {}",
            init.q_input,
            a.out.display()
        ),
        _ => println!("no training epochs; initial checkpoint in {}", a.out.display()),
    }
    Ok(())
}

fn cmd_enhance(a: &EnhanceArgs) -> Result<()> {
    if !a.checkpoint.exists() {
        bail!("checkpoint {} not found", a.checkpoint.display());
    }
    let enhancer = Enhancer::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let bundle_cfg = crate::trainer::load_bundle(&a.checkpoint)?.meta.config;
    match (&a.input, &a.output, &a.manifest, &a.out_dir) {
        (Some(input), Some(output), None, _) => {
            let wave = read_wav(input)?;
            let out = enhancer.enhance(&wave)?;
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_wav(output, &out, WavFormat::Float32)?;
            let dir = output.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            echo_config(dir, "enhance_config.txt", &bundle_cfg)?;
            println!("wrote {}", output.display());
        }
        (None, _, Some(manifest), Some(out_dir)) => {
            let utts = load(manifest, a.split)?;
            fs::create_dir_all(out_dir)?;
            for u in &utts {
                let out = enhancer
                    .enhance(&u.input)
                    .with_context(|| format!("enhancing {}", u.entry.id))?;
                write_wav(out_dir.join(format!("{}.wav", u.entry.id)), &out, WavFormat::Float32)?;
            }
            echo_config(out_dir, "enhance_config.txt", &bundle_cfg)?;
            println!("wrote {} files to {}", utts.len(), out_dir.display());
        }
        _ => return usage("enhance needs --input and --output, or --manifest and --out-dir"),
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let metric = a.metric.build()?;
    let utts = load(&a.manifest, a.split)?;
    let waves = if let Some(ck) = &a.checkpoint {
        let e = Enhancer::load(ck).with_context(|| format!("loading {}", ck.display()))?;
        utts.iter()
            .map(|u| e.enhance(&u.input).with_context(|| format!("enhancing {}", u.entry.id)))
            .collect::<Result<Vec<_>>>()?
    } else if a.clean {
        utts.iter()
            .map(|u| u.clean.clone().with_context(|| format!("{}: no clean reference", u.entry.id)))
            .collect::<Result<Vec<_>>>()?
    } else {
        utts.iter().map(|u| u.input.clone()).collect()
    };
    let items: Vec<(&str, &_)> = utts.iter().map(|u| u.entry.id.as_str()).zip(&waves).collect();
    let table = evaluate(&items, metric.as_ref());
    let csv = table.to_csv();
    match &a.output {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, &csv)?;
            let echo = serde_json::json!({
                "manifest": a.manifest,
                "split": a.split.map(|s| s.to_string()),
                "checkpoint": a.checkpoint,
                "clean": a.clean,
                "metric": metric.name(),
            });
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            echo_config(dir, "eval_config.txt", &echo)?;
        }
        None => print!("{csv}"),
    }
    if table.failures() == table.rows.len() {
        bail!("the metric failed on every utterance");
    }
    Ok(())
}

fn cmd_baseline(a: &BaselineArgs) -> Result<()> {
    let cfg: WienerConfig = a.config.resolve(WienerConfig::default(), Vec::new())?;
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let metric = a.metric.build()?;
    let utts = load(&a.manifest, a.split)?;
    fs::create_dir_all(&a.out_dir)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut enhanced = Vec::new();
    let mut seg = String::from("id,segsnr_input,segsnr_enhanced\n");
    for u in &utts {
        let y = wiener_enhance(&u.input, &cfg).with_context(|| format!("enhancing {}", u.entry.id))?;
        let name = format!("{}.wav", u.entry.id);
        write_wav(a.out_dir.join(&name), &y, WavFormat::Float32)?;
        if let Some(c) = &u.clean {
            seg.push_str(&format!("{},{},{}\n", u.entry.id, segmental_snr(c, &u.input)?, segmental_snr(c, &y)?));
        }
        let mut e = u.entry.clone();
        e.input_path = PathBuf::from(&name);
        e.clean_path = u.entry.resolved_clean(base).map(|p| fs::canonicalize(&p).unwrap_or(p));
        entries.push(e);
        enhanced.push(y);
    }
    write_manifest(a.out_dir.join("manifest.jsonl"), &entries)?;
    let items: Vec<(&str, &_)> = utts.iter().map(|u| u.entry.id.as_str()).zip(&enhanced).collect();
    fs::write(a.out_dir.join("scores.csv"), evaluate(&items, metric.as_ref()).to_csv())?;
    if seg.lines().count() > 1 {
        fs::write(a.out_dir.join("segsnr.csv"), seg)?;
    }
    echo_config(&a.out_dir, "baseline_config.txt", &cfg)?;
    println!("enhanced {} utterances into {}", utts.len(), a.out_dir.display());
    Ok(())
}

fn cmd_selfcheck(a: &SelfcheckArgs) -> Result<()> {
    if let Some(op) = &a.corrupt {
        if !crate::selfcheck::gradient_cases().iter().any(|c| c.name == op) {
            return usage(format!("unknown gradient check {op:?}"));
        }
    }
    let checks = crate::selfcheck::run(a.corrupt.as_deref());
    let mut report = String::new();
    for c in &checks {
        report.push_str(&format!("{c}\n"));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    report.push_str(&format!("{} checks, {} failed\n", checks.len(), failed.len()));
    print!("{report}");
    if let Some(p) = &a.report {
        fs::write(p, &report)?;
    }
    if !failed.is_empty() {
        bail!("selfcheck failed: {}", failed.join(", "));
    }
    Ok(())
}

fn cmd_metric_server(_: &MetricServerArgs) -> Result<()> {
    let cfg = SrmrConfig::default();
    let stdin = std::io::stdin();
    serve(stdin.lock(), std::io::stdout(), |path| srmr(&read_wav(path)?, &cfg))?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        // fails only if a pool already exists, e.g. when called twice in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Selfcheck(a) => cmd_selfcheck(a),
        Command::MetricServer(a) => cmd_metric_server(a),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}
