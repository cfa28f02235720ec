//! Vector-valued reverse-mode differentiation over model parameters.
//!
//! A [`Tape`] records every primitive applied during a forward pass together
//! with its output. [`Tape::backward`] walks the record in reverse and
//! accumulates exact gradients for every parameter tensor the pass touched.
//! Forward evaluation and [`Tape::replay`] share one evaluation routine, so a
//! replay with unchanged parameters is bit-identical to the recorded pass.

use crate::error::{Error, Result};
use crate::params::{Gradients, Linear, Model, ParamId};

/// Probability clamp used by the cross-entropy losses.
pub const PROB_EPS: f64 = 1e-7;
/// Minimum extent of a predicted box side.
pub const BOX_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Row {
        table: ParamId,
        row: usize,
    },
    Affine {
        lin: Linear,
        x: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
        len: usize,
    },
    Mean(Vec<Var>),
    /// `(cx, cy, w, h)` in (0, 1) to clamped `[x0, y0, x1, y1]`.
    BoxFromCenter(Var),
    /// `scale * sum((x - target)^2)`.
    SquaredError {
        x: Var,
        target: Vec<f64>,
        scale: f64,
    },
    /// Mean binary cross-entropy of probabilities against 0/1 targets.
    BinaryCrossEntropy {
        p: Var,
        target: Vec<u8>,
    },
    /// Softmax over consecutive groups of `k` entries.
    Softmax {
        x: Var,
        k: usize,
    },
    /// Mean over groups of `-ln p[group, target]`.
    CategoricalCrossEntropy {
        p: Var,
        k: usize,
        target: Vec<u8>,
    },
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_EPS {
        (PROB_EPS, true)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, true)
    } else {
        (p, false)
    }
}

/// Converts center/size to corners, clamps to the unit square, and widens a
/// degenerate side to `BOX_EPS`. Returns the corners and, per corner,
/// whether it is a pass-through of the unclamped expression.
fn box_from_center(s: &[f64]) -> ([f64; 4], [bool; 4]) {
    let mut out = [0.0; 4];
    let mut live = [true; 4];
    for axis in 0..2 {
        let (c, half) = (s[axis], s[axis + 2] / 2.0);
        let (mut lo, mut hi) = (c - half, c + half);
        if lo < 0.0 {
            lo = 0.0;
            live[axis] = false;
        }
        if hi > 1.0 {
            hi = 1.0;
            live[axis + 2] = false;
        }
        if hi - lo < BOX_EPS {
            lo = lo.min(1.0 - BOX_EPS);
            hi = lo + BOX_EPS;
            live[axis] = false;
            live[axis + 2] = false;
        }
        out[axis] = lo;
        out[axis + 2] = hi;
    }
    (out, live)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, model: &Model, op: Op) -> Var {
        let value = self.eval(&op, model, |v| &self.nodes[v.0].value);
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn eval<'a>(&'a self, op: &Op, model: &Model, val: impl Fn(Var) -> &'a [f64]) -> Vec<f64> {
        match op {
            Op::Input => unreachable!("inputs carry their own value"),
            Op::Row { table, row } => model.tensor(*table).row(*row).to_vec(),
            Op::Affine { lin, x } => {
                let w = model.tensor(lin.weight);
                let b = &model.tensor(lin.bias).data;
                let x = val(*x);
                (0..w.rows).map(|i| dot(w.row(i), x) + b[i]).collect()
            }
            Op::Relu(x) => val(*x).iter().map(|&v| v.max(0.0)).collect(),
            Op::Sigmoid(x) => val(*x).iter().map(|&v| sigmoid(v)).collect(),
            Op::Concat(parts) => parts.iter().flat_map(|&p| val(p).iter().copied()).collect(),
            Op::Slice { x, start, len } => val(*x)[*start..start + len].to_vec(),
            Op::Mean(parts) => {
                let mut acc = vec![0.0; val(parts[0]).len()];
                for &p in parts {
                    axpy(1.0, val(p), &mut acc);
                }
                let n = parts.len() as f64;
                acc.iter_mut().for_each(|v| *v /= n);
                acc
            }
            Op::BoxFromCenter(x) => box_from_center(val(*x)).0.to_vec(),
            Op::SquaredError { x, target, scale } => {
                let s: f64 = val(*x)
                    .iter()
                    .zip(target)
                    .map(|(a, t)| (a - t) * (a - t))
                    .sum();
                vec![scale * s]
            }
            Op::BinaryCrossEntropy { p, target } => {
                let p = val(*p);
                let s: f64 = p
                    .iter()
                    .zip(target)
                    .map(|(&pi, &t)| {
                        let q = clamp_prob(pi).0;
                        if t == 1 {
                            -q.ln()
                        } else {
                            -(1.0 - q).ln()
                        }
                    })
                    .sum();
                vec![s / p.len() as f64]
            }
            Op::Softmax { x, k } => {
                let x = val(*x);
                let mut out = vec![0.0; x.len()];
                for (src, dst) in x.chunks(*k).zip(out.chunks_mut(*k)) {
                    let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = (s - m).exp();
                        z += *d;
                    }
                    dst.iter_mut().for_each(|d| *d /= z);
                }
                out
            }
            Op::CategoricalCrossEntropy { p, k, target } => {
                let p = val(*p);
                let s: f64 = p
                    .chunks(*k)
                    .zip(target)
                    .map(|(cell, &t)| -clamp_prob(cell[t as usize]).0.ln())
                    .sum();
                vec![s / target.len() as f64]
            }
            Op::WeightedSum(terms) => vec![terms.iter().map(|&(v, w)| w * val(v)[0]).sum()],
        }
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.nodes.push(Node {
            op: Op::Input,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn row(&mut self, model: &Model, table: ParamId, row: usize) -> Var {
        self.push(model, Op::Row { table, row })
    }

    pub fn affine(&mut self, model: &Model, lin: Linear, x: Var) -> Var {
        self.push(model, Op::Affine { lin, x })
    }

    pub fn relu(&mut self, model: &Model, x: Var) -> Var {
        self.push(model, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, model: &Model, x: Var) -> Var {
        self.push(model, Op::Sigmoid(x))
    }

    pub fn concat(&mut self, model: &Model, parts: &[Var]) -> Var {
        self.push(model, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, model: &Model, x: Var, start: usize, len: usize) -> Var {
        self.push(model, Op::Slice { x, start, len })
    }

    /// Arithmetic mean of equally sized vectors, summed in the given order.
    pub fn mean(&mut self, model: &Model, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "mean of zero vectors");
        self.push(model, Op::Mean(parts.to_vec()))
    }

    pub fn box_from_center(&mut self, model: &Model, x: Var) -> Var {
        self.push(model, Op::BoxFromCenter(x))
    }

    pub fn squared_error(&mut self, model: &Model, x: Var, target: Vec<f64>, scale: f64) -> Var {
        self.push(model, Op::SquaredError { x, target, scale })
    }

    pub fn binary_cross_entropy(&mut self, model: &Model, p: Var, target: Vec<u8>) -> Var {
        self.push(model, Op::BinaryCrossEntropy { p, target })
    }

    pub fn softmax(&mut self, model: &Model, x: Var, k: usize) -> Var {
        self.push(model, Op::Softmax { x, k })
    }

    pub fn categorical_cross_entropy(
        &mut self,
        model: &Model,
        p: Var,
        k: usize,
        target: Vec<u8>,
    ) -> Var {
        self.push(model, Op::CategoricalCrossEntropy { p, k, target })
    }

    pub fn weighted_sum(&mut self, model: &Model, terms: &[(Var, f64)]) -> Var {
        self.push(model, Op::WeightedSum(terms.to_vec()))
    }

    /// Re-evaluates the recorded graph against `model` and returns every
    /// node's value.
    pub fn replay(&self, model: &Model) -> Vec<Vec<f64>> {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Input => node.value.clone(),
                ref op => {
                    let vals = &values;
                    self.eval(op, model, |v: Var| vals[v.0].as_slice())
                }
            };
            values.push(v);
        }
        values
    }

    /// Whether a replay reproduces the recorded values bit for bit.
    pub fn replay_matches(&self, model: &Model) -> bool {
        self.replay(model).iter().zip(&self.nodes).all(|(a, n)| {
            a.len() == n.value.len()
                && a.iter()
                    .zip(&n.value)
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }

    /// Reverse pass from the scalar `output`, seeded with `loss_grad`.
    pub fn backward(&self, model: &Model, output: Var, loss_grad: f64) -> Result<Gradients> {
        let mut grads = model.zero_gradients();
        self.backward_into(model, output, loss_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Tape::backward`] but accumulates into existing buffers.
    pub fn backward_into(
        &self,
        model: &Model,
        output: Var,
        loss_grad: f64,
        grads: &mut Gradients,
    ) -> Result<()> {
        let width = self.nodes[output.0].value.len();
        if width != 1 {
            return Err(Error::NotScalar(width));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![loss_grad]);
        self.sweep(model, &mut adj, grads);
        Ok(())
    }

    /// Reverse sweep over `adj.len()` nodes. Adjoints of input nodes are
    /// left in `adj`.
    fn sweep(&self, model: &Model, adj: &mut [Option<Vec<f64>>], grads: &mut Gradients) {
        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64]), len: usize) {
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        }

        for idx in (0..adj.len()).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let len_of = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Input => adj[idx] = Some(g),
                Op::Row { table, row } => {
                    let cols = model.tensor(*table).cols;
                    axpy(1.0, &g, &mut grads[table.0][row * cols..(row + 1) * cols]);
                }
                Op::Affine { lin, x } => {
                    let w = model.tensor(lin.weight);
                    let xv = &self.nodes[x.0].value;
                    let mut gx = vec![0.0; w.cols];
                    let (gw, gb) = if lin.weight.0 < lin.bias.0 {
                        let (lo, hi) = grads.split_at_mut(lin.bias.0);
                        (&mut lo[lin.weight.0], &mut hi[0])
                    } else {
                        let (lo, hi) = grads.split_at_mut(lin.weight.0);
                        (&mut hi[0], &mut lo[lin.bias.0])
                    };
                    for (i, &gi) in g.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        gb[i] += gi;
                        axpy(gi, xv, &mut gw[i * w.cols..(i + 1) * w.cols]);
                        axpy(gi, w.row(i), &mut gx);
                    }
                    acc(adj, *x, |a| axpy(1.0, &gx, a), w.cols);
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    acc(
                        adj,
                        *x,
                        |a| {
                            for ((ai, &gi), &xi) in a.iter_mut().zip(&g).zip(xv) {
                                if xi > 0.0 {
                                    *ai += gi;
                                }
                            }
                        },
                        xv.len(),
                    );
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    acc(
                        adj,
                        *x,
                        |a| {
                            for ((ai, &gi), &yi) in a.iter_mut().zip(&g).zip(y) {
                                *ai += gi * yi * (1.0 - yi);
                            }
                        },
                        y.len(),
                    );
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = len_of(p);
                        acc(adj, p, |a| axpy(1.0, &g[off..off + n], a), n);
                        off += n;
                    }
                }
                Op::Slice { x, start, len } => {
                    let n = len_of(*x);
                    acc(adj, *x, |a| axpy(1.0, &g, &mut a[*start..start + len]), n);
                }
                Op::Mean(parts) => {
                    let scale = 1.0 / parts.len() as f64;
                    for &p in parts {
                        acc(adj, p, |a| axpy(scale, &g, a), g.len());
                    }
                }
                Op::BoxFromCenter(x) => {
                    let live = box_from_center(&self.nodes[x.0].value).1;
                    // x0 = cx - w/2, x1 = cx + w/2 (likewise y)
                    acc(
                        adj,
                        *x,
                        |a| {
                            for axis in 0..2 {
                                if live[axis] {
                                    a[axis] += g[axis];
                                    a[axis + 2] -= 0.5 * g[axis];
                                }
                                if live[axis + 2] {
                                    a[axis] += g[axis + 2];
                                    a[axis + 2] += 0.5 * g[axis + 2];
                                }
                            }
                        },
                        4,
                    );
                }
                Op::SquaredError { x, target, scale } => {
                    let xv = &self.nodes[x.0].value;
                    let k = 2.0 * scale * g[0];
                    acc(
                        adj,
                        *x,
                        |a| {
                            for ((ai, &xi), &ti) in a.iter_mut().zip(xv).zip(target) {
                                *ai += k * (xi - ti);
                            }
                        },
                        xv.len(),
                    );
                }
                Op::BinaryCrossEntropy { p, target } => {
                    let pv = &self.nodes[p.0].value;
                    let k = g[0] / pv.len() as f64;
                    acc(
                        adj,
                        *p,
                        |a| {
                            for ((ai, &pi), &t) in a.iter_mut().zip(pv).zip(target) {
                                let (q, clamped) = clamp_prob(pi);
                                if !clamped {
                                    *ai += if t == 1 { -k / q } else { k / (1.0 - q) };
                                }
                            }
                        },
                        pv.len(),
                    );
                }
                Op::Softmax { x, k } => {
                    let y = &node.value;
                    acc(
                        adj,
                        *x,
                        |a| {
                            for ((ac, gc), yc) in
                                a.chunks_mut(*k).zip(g.chunks(*k)).zip(y.chunks(*k))
                            {
                                let s: f64 = gc.iter().zip(yc).map(|(gi, yi)| gi * yi).sum();
                                for ((ai, gi), yi) in ac.iter_mut().zip(gc).zip(yc) {
                                    *ai += yi * (gi - s);
                                }
                            }
                        },
                        y.len(),
                    );
                }
                Op::CategoricalCrossEntropy { p, k, target } => {
                    let pv = &self.nodes[p.0].value;
                    let scale = g[0] / target.len() as f64;
                    acc(
                        adj,
                        *p,
                        |a| {
                            for (cell, &t) in target.iter().enumerate() {
                                let i = cell * k + t as usize;
                                let (q, clamped) = clamp_prob(pv[i]);
                                if !clamped {
                                    a[i] -= scale / q;
                                }
                            }
                        },
                        pv.len(),
                    );
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        acc(adj, v, |a| a[0] += w * g[0], 1);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
impl Tape {
    /// Adjoint of an input node, for testing primitives directly.
    fn input_gradient(&self, model: &Model, output: Var, input: Var) -> Vec<f64> {
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);
        let mut grads = model.zero_gradients();
        self.sweep(model, &mut adj, &mut grads);
        adj[input.0]
            .take()
            .unwrap_or_else(|| vec![0.0; self.nodes[input.0].value.len()])
    }
}
