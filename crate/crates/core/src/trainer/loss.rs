use crate::nn::{NnError, Tape, Var};

/// Surrogate regression loss: the discriminator should reproduce the
/// normalized metric of both the enhanced and the unprocessed signal.
pub fn discriminator_loss(d_enh: f64, q_enh: f64, d_noisy: f64, q_noisy: f64) -> f64 {
    (d_enh - q_enh).powi(2) + (d_noisy - q_noisy).powi(2)
}

/// Pushes the discriminator's score towards `target`, plus `recon_weight`
/// times a reconstruction penalty.
pub fn generator_loss(d_enh: f64, target: f64, recon_l2: f64, recon_weight: f64) -> f64 {
    (d_enh - target).powi(2) + recon_weight * recon_l2
}

/// `(d - q)^2` with `q` a constant.
pub(crate) fn squared_error_to(tape: &mut Tape, d: Var, q: f64) -> Result<Var, NnError> {
    let e = tape.add_scalar(d, -q)?;
    tape.square(e)
}

/// Mean over elements of `(a - b)^2`.
pub(crate) fn mean_squared(tape: &mut Tape, a: Var, b: Var) -> Result<Var, NnError> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d)?;
    tape.mean(sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn discriminator_loss_cases() {
        assert_eq!(discriminator_loss(0.3, 0.3, 0.7, 0.7), 0.0);
        assert_eq!(discriminator_loss(1.0, 0.0, 1.0, 0.0), 2.0);
        assert!((discriminator_loss(0.5, 0.8, 0.3, 0.2) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_cases() {
        assert_eq!(generator_loss(1.0, 1.0, 0.0, 0.6), 0.0);
        assert_eq!(generator_loss(0.5, 1.0, 0.9, 0.0), 0.25);
        assert!((generator_loss(0.5, 1.0, 0.2, 0.6) - 0.37).abs() < 1e-12);
    }

    #[test]
    fn tape_forms_agree_with_scalar_forms() {
        let mut t = Tape::new();
        let d = t.variable(Tensor::scalar(0.5));
        let l = squared_error_to(&mut t, d, 0.8).unwrap();
        assert!((t.value(l).item().unwrap() - 0.09).abs() < 1e-12);
        // gradient 2(d - q)
        let g = t.backward(l).unwrap();
        assert!((g.get(d).unwrap().item().unwrap() + 0.6).abs() < 1e-12);

        let a = t.variable(Tensor::new(vec![2], vec![1.0, 3.0]).unwrap());
        let b = t.constant(Tensor::new(vec![2], vec![0.0, 1.0]).unwrap());
        let m = mean_squared(&mut t, a, b).unwrap();
        assert_eq!(t.value(m).item().unwrap(), 2.5);
    }
}
