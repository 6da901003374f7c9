use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{kaiming_uniform, linear, uniform_fan_in, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub conv_layers: usize,
    pub filters: usize,
    /// (time, frequency)
    pub kernel: (usize, usize),
    /// LeakyReLU hidden layers after pooling; a single linear output follows.
    pub dense: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            conv_layers: 4,
            filters: 15,
            kernel: (5, 5),
            dense: vec![50, 10],
            leaky_slope: 0.3,
        }
    }
}

impl DiscriminatorSpec {
    /// Eight filters per conv layer; the rest as in the default.
    pub fn desk() -> Self {
        Self {
            filters: 8,
            ..Self::default()
        }
    }

    /// Smallest (frames, bins) that survives every valid convolution.
    pub fn min_input(&self) -> (usize, usize) {
        (
            self.conv_layers * (self.kernel.0 - 1) + 1,
            self.conv_layers * (self.kernel.1 - 1) + 1,
        )
    }

    pub fn param_count(&self) -> usize {
        let (kh, kw) = self.kernel;
        let f = self.filters;
        let conv: usize = (0..self.conv_layers)
            .map(|l| {
                let cin = if l == 0 { 1 } else { f };
                f * cin * kh * kw + f
            })
            .sum();
        let mut dense = 0;
        let mut prev = f;
        for &w in self.dense.iter().chain(std::iter::once(&1)) {
            dense += prev * w + w;
            prev = w;
        }
        conv + dense
    }
}

/// Valid 2-D convolutions with LeakyReLU, global average pooling to one
/// value per filter, then a small dense head ending in one linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub params: ParamStore,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (kh, kw) = spec.kernel;
        for l in 0..spec.conv_layers {
            let cin = if l == 0 { 1 } else { spec.filters };
            let fan_in = cin * kh * kw;
            let w = kaiming_uniform(&[spec.filters, cin, kh, kw], fan_in, spec.leaky_slope, &mut rng);
            params.add(format!("conv{l}.w"), w);
            params.add(format!("conv{l}.b"), Tensor::zeros(&[spec.filters]));
        }
        let mut prev = spec.filters;
        for (i, &w) in spec.dense.iter().enumerate() {
            params.add(format!("dense{i}.w"), kaiming_uniform(&[prev, w], prev, spec.leaky_slope, &mut rng));
            params.add(format!("dense{i}.b"), Tensor::zeros(&[w]));
            prev = w;
        }
        params.add("out.w", uniform_fan_in(&[prev, 1], prev, &mut rng));
        params.add("out.b", uniform_fan_in(&[1], prev, &mut rng));
        Self { spec, params }
    }

    /// Scores a `[T, F]` feature map; returns a one-element node.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ModelError> {
        let (min_frames, min_bins) = self.spec.min_input();
        let shape = tape.value(x).shape().to_vec();
        let &[frames, bins] = shape.as_slice() else {
            return Err(ModelError::Nn(crate::nn::NnError::Shape(format!(
                "discriminator expects [frames, bins], got {shape:?}"
            ))));
        };
        if frames < min_frames || bins < min_bins {
            return Err(ModelError::InputTooSmall {
                min_frames,
                min_bins,
                frames,
                bins,
            });
        }
        let slope = self.spec.leaky_slope;
        let mut h = tape.reshape(x, &[1, frames, bins])?;
        let mut k = 0;
        for _ in 0..self.spec.conv_layers {
            h = tape.conv2d(h, bound[k], bound[k + 1])?;
            h = tape.leaky_relu(h, slope)?;
            k += 2;
        }
        let p = tape.global_avg_pool2d(h)?;
        let mut d = tape.reshape(p, &[1, self.spec.filters])?;
        for _ in 0..self.spec.dense.len() {
            d = linear(tape, d, bound[k], bound[k + 1])?;
            d = tape.leaky_relu(d, slope)?;
            k += 2;
        }
        let o = linear(tape, d, bound[k], bound[k + 1])?;
        Ok(tape.reshape(o, &[1])?)
    }

    /// Inference without gradient tracking.
    pub fn score(&self, features: &Tensor) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(features.clone());
        let y = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(y).item()?)
    }
}
