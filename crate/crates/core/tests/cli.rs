use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use metricgan_u::dsp::wav::read_wav;
use metricgan_u::trainer::{Bundle, TrainConfig};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metricgan-u"))
        .args(["--threads", "1", "-q"])
        .args(args)
        .env_remove("MGU_EPOCHS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(out: &Path, n: usize) -> PathBuf {
    let n = format!("n_utterances={n}");
    let o = run(&[
        "synth", "--seed", "4", "--out", s(out), "--set", &n, "--set", "n_speakers=5", "--set", "duration_secs=1.0",
        "--set", "valid_groups=1", "--set", "test_groups=1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("manifest.jsonl")
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["train"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--out", s(dir.path()), "--set", "no_such_key=1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no_such_key"));
    let o = run(&["eval", "--manifest", s(&dir.path().join("absent.jsonl"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absent.jsonl"));
}

#[test]
fn synth_is_fast_repeatable_and_reports_missing_sources() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    synth(&a, 20);
    assert!(start.elapsed().as_secs() < 60);
    synth(&b, 20);
    for f in ["manifest.jsonl", "train.jsonl", "valid.jsonl", "test.jsonl"] {
        let text = fs::read_to_string(a.join(f)).unwrap();
        assert!(!text.is_empty(), "{f}");
        assert_eq!(text, fs::read_to_string(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("synth_config.txt").exists());

    let missing = dir.path().join("rirs-missing");
    let o = run(&["synth", "--out", s(&dir.path().join("c")), "--set", &format!("degradation_dir={}", s(&missing))]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("rirs-missing"), "{}", stderr(&o));
}

#[test]
fn zero_epoch_training_writes_initial_state_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"), 10);
    let cfg = dir.path().join("train.txt");
    fs::write(&cfg, "epochs = 5\nrecon_weight = 0.3\n").unwrap();
    let out = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_metricgan-u"))
        .args(["-q", "train", "--desk", "--manifest", s(&manifest), "--out", s(&out), "--config", s(&cfg)])
        .env("MGU_EPOCHS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("init.ckpt").exists());
    assert!(!out.join("full.ckpt").exists());
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("epochs = 0\n") && echo.contains("recon_weight = 0.3\n"), "{echo}");
}

#[test]
fn enhance_single_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = synth(&corpus, 10);
    let ckpt = dir.path().join("identity.ckpt");
    Bundle::identity(TrainConfig::desk()).save(&ckpt).unwrap();

    let input = corpus.join("valid").read_dir().unwrap().next().unwrap().unwrap().path();
    let output = dir.path().join("one/out.wav");
    let o = run(&["enhance", "--checkpoint", s(&ckpt), "--input", s(&input), "--output", s(&output)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (x, y) = (read_wav(&input).unwrap(), read_wav(&output).unwrap());
    assert_eq!(x.len(), y.len());
    let (a, b) = (&x.samples()[512..x.len() - 512], &y.samples()[512..y.len() - 512]);
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
    let den: f64 = a.iter().map(|p| p * p).sum();
    assert!((num / den).sqrt() < 1e-6);

    let batch = dir.path().join("batch");
    let o = run(&["enhance", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--out-dir", s(&batch)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let wavs = fs::read_dir(&batch).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav")).count();
    assert_eq!(wavs, 10);
    assert!(batch.join("utt0000.wav").exists());

    let o = run(&["enhance", "--checkpoint", s(&dir.path().join("nope.ckpt")), "--input", s(&input), "--output", s(&output)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_is_repeatable_and_ranks_clean_above_reverberant() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"), 10);
    let first = run(&["eval", "--manifest", s(&manifest)]);
    let again = run(&["eval", "--manifest", s(&manifest)]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(first.stdout, again.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("id,raw,normalized,error"));
    assert_eq!(text.lines().count(), 12);
    let mean = |t: &str| -> f64 { t.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap() };

    let csv = dir.path().join("scores/clean.csv");
    let o = run(&["eval", "--manifest", s(&manifest), "--clean", "--output", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(mean(&fs::read_to_string(&csv).unwrap()) > mean(&text));
    assert!(dir.path().join("scores/eval_config.txt").exists());
}

#[test]
fn baseline_writes_enhanced_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("noisy");
    let o = run(&[
        "synth", "--out", s(&corpus), "--set", "kind=noisy", "--set", "n_utterances=6", "--set", "n_speakers=3",
        "--set", "duration_secs=1.0", "--set", "valid_groups=1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("wiener");
    let o = run(&["baseline", "--manifest", s(&corpus.join("manifest.jsonl")), "--out-dir", s(&out), "--set", "gain_floor=0.2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["manifest.jsonl", "scores.csv", "segsnr.csv", "baseline_config.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(out.join("manifest.jsonl")).unwrap().lines().count(), 6);
    assert!(fs::read_to_string(out.join("baseline_config.txt")).unwrap().contains("gain_floor = 0.2\n"));
    let rescored = run(&["eval", "--manifest", s(&out.join("manifest.jsonl"))]);
    assert_eq!(code(&rescored), 0, "{}", stderr(&rescored));
}

#[test]
fn selfcheck_reports_and_catches_a_corrupted_op() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.txt");
    let start = Instant::now();
    let o = run(&["selfcheck", "--report", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(start.elapsed().as_secs() < 120);
    let text = fs::read_to_string(&report).unwrap();
    for c in metricgan_u::selfcheck::gradient_cases() {
        assert!(text.contains(&format!("PASS grad/{}", c.name)), "{}", c.name);
    }
    assert!(text.contains("PASS stft/round trip") && text.trim_end().ends_with(", 0 failed"));

    let o = run(&["selfcheck", "--corrupt", "matmul"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("matmul"));
    assert_eq!(code(&run(&["selfcheck", "--corrupt", "no_such_op"])), 1);
}
