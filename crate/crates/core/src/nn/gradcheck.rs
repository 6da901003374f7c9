use super::tape::{Tape, Var};
use super::{NnError, Tensor};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is essentially zero are judged on absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between backward gradients and central finite
/// differences over every coordinate of every input in `point`.
///
/// `f` receives the inputs as tracked leaves and must return a one-element
/// loss. The relative error of a coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`.
pub fn grad_check<F>(f: F, point: &[Tensor], step: f64) -> Result<f64, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let eval = |pt: &[Tensor]| -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = pt.iter().map(|t| tape.variable(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut probe = point.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(point[i].shape()));
        for j in 0..point[i].len() {
            let x0 = point[i].data()[j];
            probe[i].data_mut()[j] = x0 + step;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = x0 - step;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[j];
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
