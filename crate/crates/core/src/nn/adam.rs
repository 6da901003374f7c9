use serde::{Deserialize, Serialize};

use super::{NnError, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for one [`ParamStore`], in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update from the accumulated gradients. Gradients
    /// are left in place; callers zero them.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<(), NnError> {
        if self.m.len() != params.len() {
            return Err(NnError::Shape(format!(
                "optimizer holds {} moments for {} parameters",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in params.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.shape() != p.value.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam",
                    left: m.shape().to_vec(),
                    right: p.value.shape().to_vec(),
                });
            }
            let (pv, g) = (p.value.data_mut(), p.grad.data());
            for (((w, g), m), v) in pv.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [2.5, -0.01] {
            let mut s = single(1.0);
            s.params_mut()[0].grad = Tensor::scalar(g);
            let mut opt = AdamState::new(AdamConfig::default(), &s);
            opt.step(&mut s).unwrap();
            // step 1: m_hat = g, v_hat = g^2
            let expect = 1.0 - 5e-4 * g / (g.abs() + 1e-8);
            assert!((s.params()[0].value.item().unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = single(0.7);
        let mut opt = AdamState::new(AdamConfig::default(), &s);
        opt.step(&mut s).unwrap();
        assert_eq!(s.params()[0].value.item().unwrap(), 0.7);
    }

    #[test]
    fn minimizes_shifted_quadratic() {
        let mut s = single(0.0);
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        let mut opt = AdamState::new(cfg, &s);
        for _ in 0..200 {
            let w = s.params()[0].value.item().unwrap();
            s.params_mut()[0].grad = Tensor::scalar(2.0 * (w - 3.0));
            opt.step(&mut s).unwrap();
        }
        assert!((s.params()[0].value.item().unwrap() - 3.0).abs() < 0.05);
    }
}
