use super::tape::{Tape, Var};
use super::NnError;

/// `x W + b` for `x [T, in]`, `W [in, out]`, `b [out]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Weights of one LSTM direction. Gate blocks along the `4H` axis are
/// ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    /// `[F, 4H]`
    pub w_ih: Var,
    /// `[H, 4H]`
    pub w_hh: Var,
    /// `[4H]`
    pub b: Var,
}

/// Runs one direction over `x [T, F]` from a zero state; returns `[T, H]`
/// in time order.
pub fn lstm(tape: &mut Tape, x: Var, w: LstmWeights, reverse: bool) -> Result<Var, NnError> {
    lstm_inner(tape, x, w, reverse).map_err(|e| match e {
        NnError::NonFinite { .. } => NnError::RecurrenceDiverged,
        other => other,
    })
}

fn lstm_inner(tape: &mut Tape, x: Var, w: LstmWeights, reverse: bool) -> Result<Var, NnError> {
    let t_len = tape.value(x).shape()[0];
    if t_len == 0 {
        return Err(NnError::Shape("lstm needs at least one step".into()));
    }
    let h_dim = tape.value(w.w_hh).shape()[0];
    // input projection for all steps at once
    let proj = linear(tape, x, w.w_ih, w.b)?;
    let mut h = tape.constant(super::Tensor::zeros(&[1, h_dim]));
    let mut c = tape.constant(super::Tensor::zeros(&[1, h_dim]));
    let mut outs = vec![h; t_len];
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in order {
        let xt = tape.slice(proj, 0, t, 1)?;
        let rec = tape.matmul(h, w.w_hh)?;
        let z = tape.add(xt, rec)?;
        let zi = tape.slice(z, 1, 0, h_dim)?;
        let zf = tape.slice(z, 1, h_dim, h_dim)?;
        let zg = tape.slice(z, 1, 2 * h_dim, h_dim)?;
        let zo = tape.slice(z, 1, 3 * h_dim, h_dim)?;
        let i = tape.sigmoid(zi)?;
        let f = tape.sigmoid(zf)?;
        let g = tape.tanh(zg)?;
        let o = tape.sigmoid(zo)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        h = tape.mul(o, tc)?;
        outs[t] = h;
    }
    tape.concat(&outs, 0)
}

/// Forward and backward directions concatenated per step: `[T, 2H]`.
pub fn bilstm(tape: &mut Tape, x: Var, fwd: LstmWeights, bwd: LstmWeights) -> Result<Var, NnError> {
    let a = lstm(tape, x, fwd, false)?;
    let b = lstm(tape, x, bwd, true)?;
    tape.concat(&[a, b], 1)
}
