use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dsp::Mask;
use crate::nn::{bilstm, linear, uniform_fan_in, LstmWeights, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub blstm_layers: usize,
    /// Units per direction.
    pub blstm_width: usize,
    pub dense_width: usize,
    pub output_bins: usize,
    pub mask_floor: f64,
    pub leaky_slope: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            blstm_layers: 2,
            blstm_width: 200,
            dense_width: 300,
            output_bins: 257,
            mask_floor: Mask::DEFAULT_FLOOR,
            leaky_slope: 0.3,
        }
    }
}

impl GeneratorSpec {
    /// One BLSTM layer of 64 units per direction.
    pub fn desk() -> Self {
        Self {
            blstm_layers: 1,
            blstm_width: 64,
            ..Self::default()
        }
    }

    pub fn param_count(&self) -> usize {
        let h = self.blstm_width;
        let lstm: usize = (0..self.blstm_layers)
            .map(|l| {
                let input = if l == 0 { self.output_bins } else { 2 * h };
                2 * (input * 4 * h + h * 4 * h + 4 * h)
            })
            .sum();
        lstm + 2 * h * self.dense_width + self.dense_width + self.dense_width * self.output_bins + self.output_bins
    }
}

/// BLSTM stack, a LeakyReLU dense layer and a sigmoid output layer whose
/// values are floored to give a mask in `[mask_floor, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub params: ParamStore,
}

impl Generator {
    pub fn new(spec: GeneratorSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let h = spec.blstm_width;
        for l in 0..spec.blstm_layers {
            let input = if l == 0 { spec.output_bins } else { 2 * h };
            for dir in ["fwd", "bwd"] {
                params.add(format!("blstm{l}.{dir}.w_ih"), uniform_fan_in(&[input, 4 * h], h, &mut rng));
                params.add(format!("blstm{l}.{dir}.w_hh"), uniform_fan_in(&[h, 4 * h], h, &mut rng));
                params.add(format!("blstm{l}.{dir}.b"), uniform_fan_in(&[4 * h], h, &mut rng));
            }
        }
        params.add("dense.w", uniform_fan_in(&[2 * h, spec.dense_width], 2 * h, &mut rng));
        params.add("dense.b", uniform_fan_in(&[spec.dense_width], 2 * h, &mut rng));
        params.add("out.w", uniform_fan_in(&[spec.dense_width, spec.output_bins], spec.dense_width, &mut rng));
        params.add("out.b", uniform_fan_in(&[spec.output_bins], spec.dense_width, &mut rng));
        Self { spec, params }
    }

    /// Output weights zeroed and the output bias set so the sigmoid saturates
    /// to exactly `1.0`: an all-ones mask for any input.
    pub fn identity(spec: GeneratorSpec) -> Self {
        Self::saturated(spec, 40.0)
    }

    /// Like [`Generator::identity`] but saturating at the floor.
    pub fn floor(spec: GeneratorSpec) -> Self {
        Self::saturated(spec, -40.0)
    }

    fn saturated(spec: GeneratorSpec, bias: f64) -> Self {
        let mut g = Self::new(spec, 0);
        let out_w = g.params.get_mut("out.w").expect("out.w exists");
        out_w.value.fill(0.0);
        g.params.get_mut("out.b").expect("out.b exists").value.fill(bias);
        g
    }

    /// `x [T, bins]` features to a mask `[T, bins]`, using parameters bound
    /// with [`ParamStore::bind`].
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ModelError> {
        let bins = tape.value(x).shape().get(1).copied().unwrap_or(0);
        if bins != self.spec.output_bins {
            return Err(ModelError::BinMismatch {
                expected: self.spec.output_bins,
                got: bins,
            });
        }
        let mut h = x;
        let mut k = 0;
        for _ in 0..self.spec.blstm_layers {
            let fwd = LstmWeights { w_ih: bound[k], w_hh: bound[k + 1], b: bound[k + 2] };
            let bwd = LstmWeights { w_ih: bound[k + 3], w_hh: bound[k + 4], b: bound[k + 5] };
            h = bilstm(tape, h, fwd, bwd)?;
            k += 6;
        }
        let d = linear(tape, h, bound[k], bound[k + 1])?;
        let d = tape.leaky_relu(d, self.spec.leaky_slope)?;
        let o = linear(tape, d, bound[k + 2], bound[k + 3])?;
        let o = tape.sigmoid(o)?;
        Ok(tape.clamp_min(o, self.spec.mask_floor)?)
    }

    /// Inference without gradient tracking.
    pub fn mask(&self, features: &Tensor) -> Result<Mask, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(features.clone());
        let m = self.forward(&mut tape, &bound, x)?;
        let t = tape.value(m);
        let (frames, bins) = (t.shape()[0], t.shape()[1]);
        Ok(Mask::clamped(frames, bins, t.data().to_vec(), self.spec.mask_floor)?)
    }
}
