use serde::{Deserialize, Serialize};

use crate::nn::{NnError, Tape, Tensor, Var};

/// Compression applied to magnitudes before either network sees them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureTransform {
    Magnitude,
    PowerLaw { exponent: f64 },
    Log1p,
}

impl Default for FeatureTransform {
    fn default() -> Self {
        FeatureTransform::PowerLaw { exponent: 0.3 }
    }
}

impl std::str::FromStr for FeatureTransform {
    type Err = String;

    /// `magnitude`, `log1p`, `power` (exponent 0.3) or `power:<exponent>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "magnitude" => Ok(FeatureTransform::Magnitude),
            "log1p" => Ok(FeatureTransform::Log1p),
            "power" => Ok(FeatureTransform::default()),
            other => other
                .strip_prefix("power:")
                .and_then(|e| e.parse::<f64>().ok())
                .filter(|e| *e > 0.0 && e.is_finite())
                .map(|exponent| FeatureTransform::PowerLaw { exponent })
                .ok_or_else(|| format!("unknown feature transform {other:?}")),
        }
    }
}

impl FeatureTransform {
    pub fn apply(self, mag: f64) -> f64 {
        match self {
            FeatureTransform::Magnitude => mag,
            FeatureTransform::PowerLaw { exponent } => mag.powf(exponent),
            FeatureTransform::Log1p => mag.ln_1p(),
        }
    }

    /// Features of fixed magnitudes `[T, F]`.
    pub fn features(self, mag: &Tensor) -> Tensor {
        mag.map(|m| self.apply(m))
    }

    /// Features of `mask ⊙ mag` on the tape, differentiable in `mask`.
    ///
    /// The power law is written `mask^p ⊙ mag^p` so the derivative stays
    /// finite where `mag` is zero (the mask is bounded below by its floor).
    pub fn masked_features(self, tape: &mut Tape, mask: Var, mag: &Tensor) -> Result<Var, NnError> {
        match self {
            FeatureTransform::Magnitude => {
                let m = tape.constant(mag.clone());
                tape.mul(mask, m)
            }
            FeatureTransform::PowerLaw { exponent } => {
                let m = tape.constant(mag.map(|v| v.powf(exponent)));
                let mp = tape.powf(mask, exponent)?;
                tape.mul(mp, m)
            }
            FeatureTransform::Log1p => {
                let m = tape.constant(mag.clone());
                let e = tape.mul(mask, m)?;
                tape.log1p(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_features_match_direct_transform() {
        let mag = Tensor::from_rows(2, 3, vec![0.0, 0.5, 2.0, 1.0, 7.0, 0.01]).unwrap();
        let mask = Tensor::from_rows(2, 3, vec![0.05, 1.0, 0.3, 0.7, 0.5, 0.9]).unwrap();
        for tr in [
            FeatureTransform::Magnitude,
            FeatureTransform::default(),
            FeatureTransform::Log1p,
        ] {
            let mut tape = Tape::new();
            let m = tape.variable(mask.clone());
            let f = tr.masked_features(&mut tape, m, &mag).unwrap();
            for i in 0..6 {
                let direct = tr.apply(mask.data()[i] * mag.data()[i]);
                assert!((tape.value(f).data()[i] - direct).abs() < 1e-12);
            }
            let s = tape.sum(f).unwrap();
            assert!(tape.backward(s).unwrap().get(m).unwrap().is_finite());
        }
    }

    #[test]
    fn transforms_are_monotone_and_parse() {
        for tr in ["magnitude", "power", "power:0.5", "log1p"] {
            let tr: FeatureTransform = tr.parse().unwrap();
            let vals: Vec<f64> = [0.0, 0.1, 1.0, 10.0].iter().map(|m| tr.apply(*m)).collect();
            assert!(vals.windows(2).all(|w| w[0] < w[1]));
        }
        assert!("power:-1".parse::<FeatureTransform>().is_err());
    }
}
