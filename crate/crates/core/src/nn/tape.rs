//! Reverse-mode tape. Nodes are appended in evaluation order, so reverse
//! index order is a valid topological order for the backward sweep.

use rayon::prelude::*;

use super::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Square(Var),
    Powf(Var, f64),
    Log1p(Var),
    ClampMin(Var, f64),
    Mean(Var),
    Sum(Var),
    Conv2d(Var, Var, Var),
    GlobalAvgPool2d(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Reshape(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Square(_) => "square",
            Op::Powf(..) => "powf",
            Op::Log1p(_) => "log1p",
            Op::ClampMin(..) => "clamp_min",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::Conv2d(..) => "conv2d",
            Op::GlobalAvgPool2d(_) => "global_avg_pool2d",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::Reshape(_) => "reshape",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    tracked: bool,
}

/// Work (multiply-adds) above which conv2d splits channels across threads.
const PAR_WORK: usize = 1 << 16;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients from one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` is untracked or does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dot product with four independent partial sums so the loop vectorizes
/// while keeping a fixed summation order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dims2(t: &Tensor) -> Option<(usize, usize)> {
    match t.shape() {
        [m, n] => Some((*m, *n)),
        _ => None,
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn matmul_fwd(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                axpy(av, &b[p * n..(p + 1) * n], row);
            }
        }
    }
    out
}

struct ConvDims {
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn conv_fwd(x: &[f64], w: &[f64], b: &[f64], d: &ConvDims) -> Vec<f64> {
    let plane = d.ho * d.wo;
    let mut out = vec![0.0; d.co * plane];
    let body = |(co, dst): (usize, &mut [f64])| {
        dst.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..d.ci {
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let wv = w[((co * d.ci + ci) * d.kh + ky) * d.kw + kx];
                    for y in 0..d.ho {
                        let src = &x[(ci * d.h + y + ky) * d.w + kx..][..d.wo];
                        axpy(wv, src, &mut dst[y * d.wo..(y + 1) * d.wo]);
                    }
                }
            }
        }
    };
    if plane * d.ci * d.kh * d.kw * d.co >= PAR_WORK {
        out.par_chunks_mut(plane).enumerate().for_each(body);
    } else {
        out.chunks_mut(plane).enumerate().for_each(body);
    }
    out
}

fn conv_grad_input(gy: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let plane = d.h * d.w;
    let mut gx = vec![0.0; d.ci * plane];
    let body = |(ci, dst): (usize, &mut [f64])| {
        for co in 0..d.co {
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let wv = w[((co * d.ci + ci) * d.kh + ky) * d.kw + kx];
                    for y in 0..d.ho {
                        let g = &gy[(co * d.ho + y) * d.wo..][..d.wo];
                        axpy(wv, g, &mut dst[(y + ky) * d.w + kx..][..d.wo]);
                    }
                }
            }
        }
    };
    if d.ho * d.wo * d.ci * d.kh * d.kw * d.co >= PAR_WORK {
        gx.par_chunks_mut(plane).enumerate().for_each(body);
    } else {
        gx.chunks_mut(plane).enumerate().for_each(body);
    }
    gx
}

fn conv_grad_weight(gy: &[f64], x: &[f64], d: &ConvDims) -> Vec<f64> {
    let per_co = d.ci * d.kh * d.kw;
    let mut gw = vec![0.0; d.co * per_co];
    let body = |(co, dst): (usize, &mut [f64])| {
        for ci in 0..d.ci {
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let mut s = 0.0;
                    for y in 0..d.ho {
                        let g = &gy[(co * d.ho + y) * d.wo..][..d.wo];
                        let src = &x[(ci * d.h + y + ky) * d.w + kx..][..d.wo];
                        s += dot(g, src);
                    }
                    dst[(ci * d.kh + ky) * d.kw + kx] = s;
                }
            }
        }
    };
    if d.ho * d.wo * per_co * d.co >= PAR_WORK {
        gw.par_chunks_mut(per_co).enumerate().for_each(body);
    } else {
        gw.chunks_mut(per_co).enumerate().for_each(body);
    }
    gw
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Adds an input. Gradients flow back to `tracked` leaves only.
    pub fn leaf(&mut self, value: Tensor, tracked: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    fn push(&mut self, op: Op, value: Tensor, parents: &[Var]) -> Result<Var, NnError> {
        if !value.is_finite() {
            return Err(NnError::NonFinite {
                op: op.name(),
                phase: "forward",
            });
        }
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { op, value, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary(&mut self, op: Op, x: Var, f: impl Fn(f64) -> f64) -> Result<Var, NnError> {
        let value = self.value(x).map(f);
        self.push(op, value, &[x])
    }

    fn binary(
        &mut self,
        op: Op,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op.name(), ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(op, value, &[a, b])
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = match (dims2(ta), dims2(tb)) {
            (Some((m, k)), Some((k2, n))) if k == k2 => (m, k, n),
            _ => return Err(mismatch("matmul", ta, tb)),
        };
        let value = Tensor::new(vec![m, n], matmul_fwd(ta.data(), tb.data(), m, k, n))?;
        self.push(Op::MatMul(a, b), value, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(Op::Add(a, b), a, b, |x, y| x + y)
    }

    /// Adds the vector `b` (`[n]`) to every row of `a` (`[m, n]`).
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let n = tb.len();
        match dims2(ta) {
            Some((_, cols)) if cols == n && tb.shape().len() == 1 => {}
            _ => return Err(mismatch("add_row", ta, tb)),
        }
        let mut value = ta.clone();
        for row in value.data_mut().chunks_mut(n) {
            for (v, bias) in row.iter_mut().zip(tb.data()) {
                *v += bias;
            }
        }
        self.push(Op::AddRow(a, b), value, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, NnError> {
        self.unary(Op::Scale(x, c), x, |v| c * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var, NnError> {
        self.unary(Op::AddScalar(x), x, |v| v + c)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(Op::Sigmoid(x), x, sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(Op::Tanh(x), x, f64::tanh)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, NnError> {
        self.unary(Op::LeakyRelu(x, slope), x, |v| if v >= 0.0 { v } else { slope * v })
    }

    pub fn square(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(Op::Square(x), x, |v| v * v)
    }

    /// `x^p` for non-negative `x`. The derivative at 0 is taken as 0.
    pub fn powf(&mut self, x: Var, p: f64) -> Result<Var, NnError> {
        if self.value(x).data().iter().any(|v| *v < 0.0) {
            return Err(NnError::Domain("powf of a negative value"));
        }
        self.unary(Op::Powf(x, p), x, |v| v.powf(p))
    }

    pub fn log1p(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(Op::Log1p(x), x, f64::ln_1p)
    }

    /// `max(x, floor)`; gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Result<Var, NnError> {
        self.unary(Op::ClampMin(x, floor), x, |v| v.max(floor))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, NnError> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(NnError::Shape("mean of an empty tensor".into()));
        }
        let v = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean(x), Tensor::scalar(v), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NnError> {
        let v = self.value(x).data().iter().sum::<f64>();
        self.push(Op::Sum(x), Tensor::scalar(v), &[x])
    }

    /// Valid (unpadded, stride 1) 2-D cross-correlation:
    /// `x [Ci, H, W]`, `w [Co, Ci, Kh, Kw]`, `b [Co]` -> `[Co, H-Kh+1, W-Kw+1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let d = self.conv_dims(x, w, b)?;
        let out = conv_fwd(self.value(x).data(), self.value(w).data(), self.value(b).data(), &d);
        let value = Tensor::new(vec![d.co, d.ho, d.wo], out)?;
        self.push(Op::Conv2d(x, w, b), value, &[x, w, b])
    }

    fn conv_dims(&self, x: Var, w: Var, b: Var) -> Result<ConvDims, NnError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (&[ci, h, wd], &[co, ci2, kh, kw]) = (tx.shape(), tw.shape()) else {
            return Err(mismatch("conv2d", tx, tw));
        };
        if ci != ci2 || tb.shape() != [co] {
            return Err(mismatch("conv2d", tx, tw));
        }
        if h < kh || wd < kw {
            return Err(NnError::InputTooSmall {
                need: (kh, kw),
                got: (h, wd),
            });
        }
        Ok(ConvDims {
            ci,
            h,
            w: wd,
            co,
            kh,
            kw,
            ho: h - kh + 1,
            wo: wd - kw + 1,
        })
    }

    /// `[C, H, W] -> [C]`, the mean of each channel.
    pub fn global_avg_pool2d(&mut self, x: Var) -> Result<Var, NnError> {
        let t = self.value(x);
        let &[c, h, w] = t.shape() else {
            return Err(NnError::Shape(format!(
                "global_avg_pool2d expects [C, H, W], got {:?}",
                t.shape()
            )));
        };
        let plane = h * w;
        let data = t
            .data()
            .chunks(plane.max(1))
            .map(|ch| ch.iter().sum::<f64>() / plane as f64)
            .collect();
        let value = Tensor::new(vec![c], data)?;
        self.push(Op::GlobalAvgPool2d(x), value, &[x])
    }

    /// Joins tensors of equal rank along `axis`; other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NnError> {
        let first = self.value(*parts.first().ok_or(NnError::Shape("concat of nothing".into()))?);
        let rank = first.shape().len();
        if axis >= rank {
            return Err(NnError::Shape(format!("concat axis {axis} on rank {rank}")));
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        for p in parts {
            let t = self.value(*p);
            let ok = t.shape().len() == rank
                && t.shape().iter().enumerate().all(|(i, d)| i == axis || *d == first.shape()[i]);
            if !ok {
                return Err(mismatch("concat", first, t));
            }
            shape[axis] += t.shape()[axis];
        }
        let (outer, _, inner) = around(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(shape, data)?;
        self.push(Op::Concat(parts.to_vec(), axis), value, parts)
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, NnError> {
        let t = self.value(x);
        if axis >= t.shape().len() || start + len > t.shape()[axis] {
            return Err(NnError::Shape(format!(
                "slice {start}..{} on axis {axis} of {:?}",
                start + len,
                t.shape()
            )));
        }
        let (outer, n, inner) = around(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&t.data()[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(shape, data)?;
        self.push(Op::Slice(x, axis, start), value, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let value = self.value(x).clone().reshaped(shape)?;
        self.push(Op::Reshape(x), value, &[x])
    }

    /// Gradients of the one-element `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NnError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (parent, contrib) in self.local_grads(node, &g) {
                if !contrib.is_finite() {
                    return Err(NnError::NonFinite {
                        op: node.op.name(),
                        phase: "backward",
                    });
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            // keep the gradient of non-leaf nodes readable after the sweep
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Contributions `(parent, dL/dparent)` for tracked parents only.
    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let tracked = |v: &Var| self.nodes[v.0].tracked;
        let val = |v: Var| &self.nodes[v.0].value;
        let like = |v: Var, data: Vec<f64>| Tensor::new(val(v).shape().to_vec(), data).expect("shape");
        let elementwise = |x: Var, f: &dyn Fn(f64, f64) -> f64| {
            let data = val(x).data().iter().zip(g.data()).map(|(xv, gv)| f(*xv, *gv)).collect();
            vec![(x, like(x, data))]
        };
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(val(*a)).expect("matmul lhs");
                let n = val(*b).shape()[1];
                if tracked(a) {
                    let bd = val(*b).data();
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        let gr = &g.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            ga[i * k + p] = dot(gr, &bd[p * n..(p + 1) * n]);
                        }
                    }
                    out.push((*a, like(*a, ga)));
                }
                if tracked(b) {
                    let ad = val(*a).data();
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let gr = &g.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            if av != 0.0 {
                                axpy(av, gr, &mut gb[p * n..(p + 1) * n]);
                            }
                        }
                    }
                    out.push((*b, like(*b, gb)));
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if tracked(v) {
                        out.push((*v, g.clone()));
                    }
                }
            }
            Op::AddRow(a, b) => {
                if tracked(a) {
                    out.push((*a, g.clone()));
                }
                if tracked(b) {
                    let n = val(*b).len();
                    let mut gb = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    out.push((*b, like(*b, gb)));
                }
            }
            Op::Sub(a, b) => {
                if tracked(a) {
                    out.push((*a, g.clone()));
                }
                if tracked(b) {
                    out.push((*b, g.map(|v| -v)));
                }
            }
            Op::Mul(a, b) => {
                let times = |other: Var| -> Vec<f64> {
                    val(other).data().iter().zip(g.data()).map(|(o, gv)| o * gv).collect()
                };
                if tracked(a) {
                    out.push((*a, like(*a, times(*b))));
                }
                if tracked(b) {
                    out.push((*b, like(*b, times(*a))));
                }
            }
            Op::Scale(x, c) => out.push((*x, g.map(|v| c * v))),
            Op::AddScalar(x) | Op::Reshape(x) => {
                out.push((*x, like(*x, g.data().to_vec())));
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let data = y.iter().zip(g.data()).map(|(s, gv)| gv * s * (1.0 - s)).collect();
                out.push((*x, like(*x, data)));
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                let data = y.iter().zip(g.data()).map(|(t, gv)| gv * (1.0 - t * t)).collect();
                out.push((*x, like(*x, data)));
            }
            Op::LeakyRelu(x, slope) => {
                out.extend(elementwise(*x, &|xv, gv| if xv >= 0.0 { gv } else { slope * gv }));
            }
            Op::Square(x) => out.extend(elementwise(*x, &|xv, gv| 2.0 * xv * gv)),
            Op::Powf(x, p) => out.extend(elementwise(*x, &|xv, gv| {
                if xv > 0.0 {
                    gv * p * xv.powf(p - 1.0)
                } else {
                    0.0
                }
            })),
            Op::Log1p(x) => out.extend(elementwise(*x, &|xv, gv| gv / (1.0 + xv))),
            Op::ClampMin(x, floor) => {
                out.extend(elementwise(*x, &|xv, gv| if xv > *floor { gv } else { 0.0 }))
            }
            Op::Mean(x) => {
                let n = val(*x).len() as f64;
                let gv = g.data()[0] / n;
                out.push((*x, Tensor::full(val(*x).shape(), gv)));
            }
            Op::Sum(x) => out.push((*x, Tensor::full(val(*x).shape(), g.data()[0]))),
            Op::Conv2d(x, w, b) => {
                let d = self.conv_dims(*x, *w, *b).expect("conv dims checked in forward");
                if tracked(x) {
                    out.push((*x, like(*x, conv_grad_input(g.data(), val(*w).data(), &d))));
                }
                if tracked(w) {
                    out.push((*w, like(*w, conv_grad_weight(g.data(), val(*x).data(), &d))));
                }
                if tracked(b) {
                    let gb = g.data().chunks(d.ho * d.wo).map(|c| c.iter().sum()).collect();
                    out.push((*b, like(*b, gb)));
                }
            }
            Op::GlobalAvgPool2d(x) => {
                let shape = val(*x).shape();
                let plane = shape[1] * shape[2];
                let mut data = Vec::with_capacity(shape[0] * plane);
                for gv in g.data() {
                    data.extend(std::iter::repeat_n(gv / plane as f64, plane));
                }
                out.push((*x, like(*x, data)));
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = around(node.value.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).shape()[*axis];
                    if tracked(p) {
                        let mut data = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            data.extend_from_slice(&g.data()[base..base + n * inner]);
                        }
                        out.push((*p, like(*p, data)));
                    }
                    offset += n;
                }
            }
            Op::Slice(x, axis, start) => {
                let (outer, n, inner) = around(val(*x).shape(), *axis);
                let len = node.value.shape()[*axis];
                let mut data = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    data[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                out.push((*x, like(*x, data)));
            }
        }
        out
    }
}
