//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation stores
//! its output value plus whatever it needs for the backward sweep; the
//! sweep runs once over the nodes in reverse creation order.

use std::collections::BTreeMap;

use super::special::{gelu, gelu_grad};
use super::tensor::{matmul_nt_acc, matmul_tn_acc, Tensor};
use super::RandomSource;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Named parameter tensors, iterated in name order.
pub type ParamSet = BTreeMap<String, Tensor>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Mae {
        pred: Var,
        targets: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
    param: Option<String>,
}

pub struct Graph {
    nodes: Vec<Node>,
    grad_enabled: bool,
}

/// Result of a backward sweep: one optional gradient buffer per node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// Graph that never tracks gradients, for inference.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let tracked = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value,
            op,
            tracked,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let mut t = t;
        t.requires_grad = false;
        t.grad = None;
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: false,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Tracked leaf not tied to a named parameter.
    pub fn variable(&mut self, t: Tensor) -> Var {
        let v = self.constant(t);
        self.nodes[v.0].tracked = self.grad_enabled;
        v
    }

    /// Leaf bound to `params[name]`; tracked when the tensor requires grad.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let t = params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))?;
        let tracked = self.grad_enabled && t.requires_grad;
        let v = self.constant(t.clone());
        self.nodes[v.0].tracked = tracked;
        self.nodes[v.0].param = Some(name.to_string());
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dims("add", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// `a[m×n] + b[n]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let n = ta.cols();
        if tb.len() != n {
            return Err(Error::dims("add_row", ta.shape(), tb.shape()));
        }
        let bias = tb.data();
        let mut data = ta.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (x, b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(a, b), &[a, b]))
    }

    /// Affine map `x·w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dims("mul", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a), &[a])
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.cols();
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.len() != n || tb.len() != n {
            return Err(Error::dims("layer_norm", tx.shape(), tg.shape()));
        }
        let rows = tx.rows();
        let mut xhat = vec![0.0; rows * n];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q` is `n×D`, `k` and `v` are `c×D`; every query row attends to all
    /// `c` key rows. Masking is expressed by which rows are passed as keys.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        if tk.cols() != d || tv.cols() != d || tk.rows() != tv.rows() {
            return Err(Error::dims("attention", tq.shape(), tk.shape()));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Contract(format!("{d} columns not divisible into {heads} heads")));
        }
        let (n, c, dh) = (tq.rows(), tk.rows(), d / heads);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; heads * n * c];
        let mut out = vec![0.0; n * d];
        let (qd, kd, vd) = (tq.data(), tk.data(), tv.data());
        for h in 0..heads {
            let off = h * dh;
            for i in 0..n {
                let qi = &qd[i * d + off..i * d + off + dh];
                let p = &mut probs[(h * n + i) * c..(h * n + i + 1) * c];
                let mut max = f64::NEG_INFINITY;
                for j in 0..c {
                    let kj = &kd[j * d + off..j * d + off + dh];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    p[j] = s;
                    max = max.max(s);
                }
                let mut sum = 0.0;
                for pj in p.iter_mut() {
                    *pj = (*pj - max).exp();
                    sum += *pj;
                }
                let o = &mut out[i * d + off..i * d + off + dh];
                for j in 0..c {
                    p[j] /= sum;
                    let vj = &vd[j * d + off..j * d + off + dh];
                    for (ot, vt) in o.iter_mut().zip(vj) {
                        *ot += p[j] * vt;
                    }
                }
            }
        }
        let out = Tensor::matrix(n, d, out)?;
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            &[q, k, v],
        ))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        if start >= end || end > tx.rows() {
            return Err(Error::Contract(format!(
                "row slice {start}..{end} out of range for {:?}",
                tx.shape()
            )));
        }
        let c = tx.cols();
        let out = Tensor::matrix(end - start, c, tx.data()[start * c..end * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows { x, start }, &[x]))
    }

    /// Inverted dropout; `p = 0` returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut RandomSource) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("dropout probability must be in [0,1), got {p}")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let tx = self.value(x);
        let mask: Vec<f64> = (0..tx.len())
            .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout { x, mask }, &[x]))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let axis = tx.shape().len() - 1;
        let out = tx.softmax(axis)?;
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.cols();
        let mut data = tx.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::LogSoftmax(x), &[x]))
    }

    /// Mean over rows of `−log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let (rows, k) = (tl.rows(), tl.cols());
        if targets.len() != rows || targets.iter().any(|&t| t >= k) {
            return Err(Error::Contract(format!(
                "cross_entropy: {} targets for {rows}×{k} logits",
                targets.len()
            )));
        }
        let mut probs = vec![0.0; rows * k];
        let mut loss = 0.0;
        for r in 0..rows {
            let row = tl.row(r);
            let lse = log_sum_exp(row);
            loss += lse - row[targets[r]];
            for j in 0..k {
                probs[r * k + j] = (row[j] - lse).exp();
            }
        }
        let out = Tensor::new(vec![1], vec![loss / rows as f64])?;
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Mean absolute error against fixed targets.
    pub fn mae(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        let tp = self.value(pred);
        if tp.len() != targets.len() {
            return Err(Error::dims("mae", tp.shape(), &[targets.len()]));
        }
        let loss = tp
            .data()
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / targets.len() as f64;
        let out = Tensor::new(vec![1], vec![loss])?;
        Ok(self.push(
            out,
            Op::Mae {
                pred,
                targets: targets.to_vec(),
            },
            &[pred],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f64>();
        let out = Tensor::new(vec![1], vec![s]).expect("scalar");
        self.push(out, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let out = Tensor::new(vec![1], vec![s]).expect("scalar");
        self.push(out, Op::Mean(x), &[x])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].tracked {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`backward`](Self::backward) and adds every tracked parameter's
    /// gradient into `params[name].grad`. Parameters the loss does not reach
    /// receive an explicit zero gradient.
    pub fn backward_into(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let grads = self.backward(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            let (Some(name), true) = (&node.param, node.tracked) else {
                continue;
            };
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))?;
            match &grads.grads[i] {
                Some(g) => p.accumulate_grad(g),
                None => p.accumulate_grad(&vec![0.0; p.len()]),
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let tracked = |v: Var| self.nodes[v.0].tracked;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if tracked(*a) {
                    matmul_nt_acc(g, tb.data(), slot(grads, *a, m * k), m, n, k);
                }
                if tracked(*b) {
                    matmul_tn_acc(ta.data(), g, slot(grads, *b, k * n), m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if tracked(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::AddRow(a, b) => {
                if tracked(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if tracked(*b) {
                    let n = val(*b).len();
                    let gb = slot(grads, *b, n);
                    for row in g.chunks_exact(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if tracked(*a) {
                    let ga = slot(grads, *a, g.len());
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(tb.data()) {
                        *o += gi * y;
                    }
                }
                if tracked(*b) {
                    let gb = slot(grads, *b, g.len());
                    for ((o, gi), x) in gb.iter_mut().zip(g).zip(ta.data()) {
                        *o += gi * x;
                    }
                }
            }
            Op::Scale(a, c) => {
                let ga = slot(grads, *a, g.len());
                for (o, gi) in ga.iter_mut().zip(g) {
                    *o += gi * c;
                }
            }
            Op::Gelu(a) => {
                let ta = val(*a);
                let ga = slot(grads, *a, g.len());
                for ((o, gi), x) in ga.iter_mut().zip(g).zip(ta.data()) {
                    *o += gi * gelu_grad(*x);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = val(*gain).len();
                let gamma = val(*gain).data();
                if tracked(*gain) {
                    let gg = slot(grads, *gain, n);
                    for (row_g, row_h) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            gg[j] += row_g[j] * row_h[j];
                        }
                    }
                }
                if tracked(*bias) {
                    let gb = slot(grads, *bias, n);
                    for row in g.chunks_exact(n) {
                        add_into(gb, row);
                    }
                }
                if tracked(*x) {
                    let gx = slot(grads, *x, g.len());
                    let nf = n as f64;
                    for (r, (row_g, row_h)) in g.chunks_exact(n).zip(xhat.chunks_exact(n)).enumerate() {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let dh = row_g[j] * gamma[j];
                            s1 += dh;
                            s2 += dh * row_h[j];
                        }
                        let is = inv_std[r];
                        for j in 0..n {
                            let dh = row_g[j] * gamma[j];
                            gx[r * n + j] += is / nf * (nf * dh - s1 - row_h[j] * s2);
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, *heads, probs, g, grads),
            Op::SliceRows { x, start } => {
                let c = val(*x).cols();
                let total = val(*x).len();
                let gx = slot(grads, *x, total);
                add_into(&mut gx[start * c..start * c + g.len()], g);
            }
            Op::Dropout { x, mask } => {
                let gx = slot(grads, *x, g.len());
                for ((o, gi), m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += gi * m;
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let n = node.value.cols();
                let gx = slot(grads, *x, g.len());
                for ((gr, yr), or) in g.chunks_exact(n).zip(y.chunks_exact(n)).zip(gx.chunks_exact_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        or[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LogSoftmax(x) => {
                let y = node.value.data();
                let n = node.value.cols();
                let gx = slot(grads, *x, g.len());
                for ((gr, yr), or) in g.chunks_exact(n).zip(y.chunks_exact(n)).zip(gx.chunks_exact_mut(n)) {
                    let s: f64 = gr.iter().sum();
                    for j in 0..n {
                        or[j] += gr[j] - yr[j].exp() * s;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let k = val(*logits).cols();
                let rows = targets.len();
                let scale = g[0] / rows as f64;
                let gl = slot(grads, *logits, rows * k);
                for (r, &t) in targets.iter().enumerate() {
                    for j in 0..k {
                        let ind = if j == t { 1.0 } else { 0.0 };
                        gl[r * k + j] += scale * (probs[r * k + j] - ind);
                    }
                }
            }
            Op::Mae { pred, targets } => {
                let tp = val(*pred);
                let scale = g[0] / targets.len() as f64;
                let gp = slot(grads, *pred, targets.len());
                for ((o, p), t) in gp.iter_mut().zip(tp.data()).zip(targets) {
                    let d = p - t;
                    *o += scale * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                }
            }
            Op::Sum(x) => {
                let n = val(*x).len();
                for o in slot(grads, *x, n) {
                    *o += g[0];
                }
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                for o in slot(grads, *x, n) {
                    *o += g[0] / n as f64;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: &[f64],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let (n, c, d) = (tq.rows(), tk.rows(), tq.cols());
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; c * d];
        let mut dv = vec![0.0; c * d];
        let mut dp = vec![0.0; c];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..n {
                let p = &probs[(h * n + i) * c..(h * n + i + 1) * c];
                let gi = &g[i * d + off..i * d + off + dh];
                let mut dot = 0.0;
                for j in 0..c {
                    let vj = &tv.data()[j * d + off..j * d + off + dh];
                    dp[j] = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                    dot += p[j] * dp[j];
                    let dvj = &mut dv[j * d + off..j * d + off + dh];
                    for (o, gt) in dvj.iter_mut().zip(gi) {
                        *o += p[j] * gt;
                    }
                }
                let qi = &tq.data()[i * d + off..i * d + off + dh];
                for j in 0..c {
                    let ds = p[j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &tk.data()[j * d + off..j * d + off + dh];
                    let dqi = &mut dq[i * d + off..i * d + off + dh];
                    for (o, kt) in dqi.iter_mut().zip(kj) {
                        *o += ds * kt;
                    }
                    let dkj = &mut dk[j * d + off..j * d + off + dh];
                    for (o, qt) in dkj.iter_mut().zip(qi) {
                        *o += ds * qt;
                    }
                }
            }
        }
        for (var, buf) in [(q, dq), (k, dk), (v, dv)] {
            if self.nodes[var.0].tracked {
                add_into(slot(grads, var, buf.len()), &buf);
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
