//! Built-in verification battery: gradient checks, loss arithmetic, STFT
//! round trip and SRMR sanity.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{convolve, istft_padded, stft_padded, StftConfig, Waveform};
use crate::metrics::{srmr, SrmrConfig};
use crate::models::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use crate::nn::{bilstm, grad_check, LstmWeights, NnError, Tape, Tensor, Var};
use crate::synth::toy::{synth_rir, synth_toy_clean, ToySpeechConfig};
use crate::trainer::{discriminator_loss, generator_loss};

pub const GRAD_STEP: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured error or statistic.
    pub value: f64,
    /// What `value` is compared against.
    pub limit: f64,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} {:>11.3e} (limit {:.0e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.limit,
            if self.detail.is_empty() { String::new() } else { format!("  {}", self.detail) }
        )
    }
}

fn below(name: impl Into<String>, value: f64, limit: f64) -> Check {
    Check {
        name: name.into(),
        passed: value < limit,
        value,
        limit,
        detail: String::new(),
    }
}

type GradFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, NnError>>;

/// A gradient-check case: input shapes and the function under test.
pub struct GradCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub f: GradFn,
}

fn case(name: &'static str, shapes: &[&[usize]], f: impl Fn(&mut Tape, &[Var]) -> Result<Var, NnError> + 'static) -> GradCase {
    GradCase {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        f: Box::new(f),
    }
}

fn small_generator() -> GeneratorSpec {
    GeneratorSpec {
        blstm_layers: 1,
        blstm_width: 3,
        dense_width: 4,
        output_bins: 5,
        ..GeneratorSpec::default()
    }
}

fn small_discriminator() -> DiscriminatorSpec {
    DiscriminatorSpec {
        conv_layers: 2,
        filters: 2,
        kernel: (3, 3),
        dense: vec![3, 2],
        ..DiscriminatorSpec::default()
    }
}

/// Every tape op, the LSTM, and both full networks on small shapes.
pub fn gradient_cases() -> Vec<GradCase> {
    let g = Generator::new(small_generator(), 1);
    let g_shapes: Vec<Vec<usize>> = g.params.params().iter().map(|p| p.value.shape().to_vec()).collect();
    let d = Discriminator::new(small_discriminator(), 2);
    let d_shapes: Vec<Vec<usize>> = d.params.params().iter().map(|p| p.value.shape().to_vec()).collect();
    let mut cases = vec![
        case("matmul", &[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1])),
        case("add", &[&[3, 4], &[3, 4]], |t, v| t.add(v[0], v[1])),
        case("add_row", &[&[3, 4], &[4]], |t, v| t.add_row(v[0], v[1])),
        case("sub", &[&[3, 4], &[3, 4]], |t, v| t.sub(v[0], v[1])),
        case("mul", &[&[3, 4], &[3, 4]], |t, v| t.mul(v[0], v[1])),
        case("scale", &[&[6]], |t, v| t.scale(v[0], -1.7)),
        case("add_scalar", &[&[6]], |t, v| t.add_scalar(v[0], 0.4)),
        case("sigmoid", &[&[6]], |t, v| t.sigmoid(v[0])),
        case("tanh", &[&[6]], |t, v| t.tanh(v[0])),
        case("leaky_relu", &[&[6]], |t, v| t.leaky_relu(v[0], 0.3)),
        case("square", &[&[6]], |t, v| t.square(v[0])),
        case("powf", &[&[6]], |t, v| {
            let s = t.square(v[0])?;
            let s = t.add_scalar(s, 0.1)?;
            t.powf(s, 0.3)
        }),
        case("log1p", &[&[6]], |t, v| {
            let s = t.square(v[0])?;
            t.log1p(s)
        }),
        case("clamp_min", &[&[6]], |t, v| t.clamp_min(v[0], 0.05)),
        case("mean", &[&[2, 3, 4]], |t, v| t.mean(v[0])),
        case("sum", &[&[2, 3, 4]], |t, v| t.sum(v[0])),
        case("conv2d", &[&[2, 7, 8], &[3, 2, 5, 5], &[3]], |t, v| t.conv2d(v[0], v[1], v[2])),
        case("global_avg_pool2d", &[&[3, 4, 5]], |t, v| t.global_avg_pool2d(v[0])),
        case("concat", &[&[2, 3], &[2, 2]], |t, v| t.concat(&[v[0], v[1]], 1)),
        case("slice", &[&[4, 3]], |t, v| t.slice(v[0], 0, 1, 2)),
        case("reshape", &[&[4, 3]], |t, v| t.reshape(v[0], &[2, 6])),
        case(
            "bilstm",
            &[&[4, 3], &[3, 8], &[2, 8], &[8], &[3, 8], &[2, 8], &[8]],
            |t, v| {
                let fwd = LstmWeights { w_ih: v[1], w_hh: v[2], b: v[3] };
                let bwd = LstmWeights { w_ih: v[4], w_hh: v[5], b: v[6] };
                bilstm(t, v[0], fwd, bwd)
            },
        ),
    ];
    let n = g_shapes.len();
    let mut shapes = g_shapes;
    shapes.push(vec![4, 5]);
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    cases.push(case("generator", &shape_refs, move |t, v| {
        g.forward(t, &v[..n], v[n]).map_err(|e| e.into_nn())
    }));
    let n = d_shapes.len();
    let mut shapes = d_shapes;
    shapes.push(vec![6, 7]);
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    cases.push(case("discriminator", &shape_refs, move |t, v| {
        d.forward(t, &v[..n], v[n]).map_err(|e| e.into_nn())
    }));
    cases
}

/// Weights every output entry differently so no symmetry hides a wrong
/// gradient.
fn weighted_sum(tape: &mut Tape, y: Var) -> Result<Var, NnError> {
    let shape = tape.value(y).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect())?;
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

/// Runs one case at a seeded random point in [-1, 1]. With `corrupt`, a
/// term invisible to the backward pass is added so the check must fail.
pub fn run_grad_case(c: &GradCase, seed: u64, corrupt: bool) -> Result<f64, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point: Vec<Tensor> = c
        .shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s.clone(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        })
        .collect::<Result<_, _>>()?;
    grad_check(
        |tape, vars| {
            let y = (c.f)(tape, vars)?;
            let loss = weighted_sum(tape, y)?;
            if !corrupt {
                return Ok(loss);
            }
            let hidden: f64 = tape.value(vars[0]).data().iter().map(|x| x * x).sum();
            let k = tape.constant(Tensor::scalar(hidden));
            tape.add(loss, k)
        },
        &point,
        GRAD_STEP,
    )
}

fn loss_checks() -> Vec<Check> {
    let cases = [
        ("loss/d perfect surrogate", discriminator_loss(0.3, 0.3, 0.7, 0.7), 0.0),
        ("loss/d worst case", discriminator_loss(1.0, 0.0, 1.0, 0.0), 2.0),
        ("loss/d mixed", discriminator_loss(0.5, 0.8, 0.3, 0.2), 0.10),
        ("loss/g fixed point", generator_loss(1.0, 1.0, 0.0, 0.6), 0.0),
        ("loss/g adversarial only", generator_loss(0.5, 1.0, 0.9, 0.0), 0.25),
        ("loss/g with reconstruction", generator_loss(0.5, 1.0, 0.2, 0.6), 0.37),
    ];
    cases
        .into_iter()
        .map(|(name, got, want)| below(name, (got - want).abs(), 1e-12))
        .collect()
}

/// Worst relative L2 error over `n` random one-second signals, measured on
/// the samples covered by full frames.
pub fn stft_round_trip_error(n: usize, seed: u64) -> f64 {
    let cfg = StftConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let x: Vec<f64> = (0..16000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = Waveform::new(x, 16000).expect("finite");
        let p = stft_padded(&w, &cfg).expect("long enough");
        let y = istft_padded(&p.spec, p.front_pad, p.original_len).expect("invertible");
        let (a, b) = (&w.samples()[cfg.fft_size..16000 - cfg.fft_size], &y.samples()[cfg.fft_size..16000 - cfg.fft_size]);
        let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = a.iter().map(|p| p * p).sum();
        worst = worst.max((num / den).sqrt());
    }
    worst
}

fn srmr_checks(n: usize) -> Vec<Check> {
    let cfg = SrmrConfig::default();
    let utts = synth_toy_clean(n, 77, &ToySpeechConfig { duration_secs: 2.0, ..Default::default() });
    let mut wins = 0;
    let mut worst_scale = 0.0f64;
    let mut failure = None;
    for (i, u) in utts.iter().enumerate() {
        let rir = synth_rir(0.5, 500 + i as u64, 16000);
        let scored = (|| -> Result<(), crate::metrics::MetricError> {
            let clean = srmr(&u.wave, &cfg)?;
            let scaled = srmr(&u.wave.scaled(3.7), &cfg)?;
            worst_scale = worst_scale.max((scaled - clean).abs() / clean.abs());
            wins += usize::from(clean > srmr(&convolve(&u.wave, &rir)?, &cfg)?);
            Ok(())
        })();
        if let Err(e) = scored {
            failure = Some(e.to_string());
        }
    }
    let mut scale = below("srmr/scale invariance", worst_scale, 1e-6);
    let frac = wins as f64 / n as f64;
    let mut order = Check {
        name: "srmr/clean above reverberant".into(),
        passed: frac >= 0.9,
        value: frac,
        limit: 0.9,
        detail: format!("{wins}/{n}"),
    };
    if let Some(e) = failure {
        scale.passed = false;
        order.passed = false;
        order.detail = e;
    }
    vec![scale, order]
}

/// Runs the whole battery. `corrupt` names a gradient case to sabotage.
pub fn run(corrupt: Option<&str>) -> Vec<Check> {
    let mut out = Vec::new();
    for (i, c) in gradient_cases().iter().enumerate() {
        let name = format!("grad/{}", c.name);
        match run_grad_case(c, 100 + i as u64, corrupt == Some(c.name)) {
            Ok(e) => out.push(below(name, e, GRAD_TOL)),
            Err(e) => out.push(Check {
                name,
                passed: false,
                value: f64::NAN,
                limit: GRAD_TOL,
                detail: e.to_string(),
            }),
        }
    }
    out.extend(loss_checks());
    out.push(below("stft/round trip", stft_round_trip_error(3, 9), 1e-6));
    out.extend(srmr_checks(5));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_cases_pass_and_corruption_is_caught() {
        for (i, c) in gradient_cases().iter().enumerate() {
            let e = run_grad_case(c, i as u64, false).unwrap();
            assert!(e < GRAD_TOL, "{} {e}", c.name);
        }
        let cases = gradient_cases();
        let conv = cases.iter().find(|c| c.name == "conv2d").unwrap();
        assert!(run_grad_case(conv, 0, true).unwrap() > 0.1);
    }

    #[test]
    fn report_lines_carry_status_and_value() {
        let c = below("x", 2e-7, 1e-6);
        assert!(c.to_string().starts_with("PASS x"));
        assert!(c.to_string().contains("2.000e-7"));
        assert!(!below("y", 1.0, 1e-6).passed);
    }
}
