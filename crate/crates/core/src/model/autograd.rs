//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters from
//! frozen groups enter the tape as constants, so they never receive gradient
//! and whole frozen sub-networks with constant inputs are skipped during the
//! backward sweep.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::Matrix;

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Boolean attention pattern: `allowed[r * cols + c]` lets query `r` see key `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttnMask {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                allowed.push(f(r, c));
            }
        }
        AttnMask { rows, cols, allowed }
    }

    pub fn causal(n: usize) -> Self {
        AttnMask::from_fn(n, n, |r, c| c <= r)
    }

    #[inline]
    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    ParamRows(ParamId, Arc<Vec<usize>>),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Matrix, rstd: Vec<f64> },
    Softmax(Var),
    Transpose(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    MeanRows(Var),
    Expectation(Var, Arc<Vec<f64>>),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Gradients for trainable parameters, keyed by parameter id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Matrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    fn accumulate(&mut self, id: ParamId, shape: (usize, usize), f: impl FnOnce(&mut Matrix)) {
        let entry = self.grads.entry(id).or_insert_with(|| Matrix::zeros(shape.0, shape.1));
        f(entry);
    }

    /// Adds `other` into `self`. Accumulation order is the caller's.
    pub fn merge(&mut self, other: &Gradients) {
        for (id, g) in &other.grads {
            match self.grads.get_mut(id) {
                Some(existing) => existing.add_assign(g),
                None => {
                    self.grads.insert(*id, g.clone());
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(Matrix::is_finite)
    }
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph { store, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Frozen parameters are recorded as constants.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.value(id).clone();
        if self.store.is_trainable(id) {
            self.push(value, Op::Param(id), true)
        } else {
            self.push(value, Op::Leaf, false)
        }
    }

    /// Selected rows of a parameter table (embedding lookup).
    pub fn param_rows(&mut self, id: ParamId, rows: &[usize]) -> Var {
        let table = self.store.value(id);
        let mut out = Matrix::zeros(rows.len(), table.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(table.row(r));
        }
        if self.store.is_trainable(id) {
            self.push(out, Op::ParamRows(id, Arc::new(rows.to_vec())), true)
        } else {
            self.push(out, Op::Leaf, false)
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_t(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds the `1 × cols` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "add_row bias must be a row vector");
        assert_eq!(b.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut value = self.value(a).clone();
        let brow = b.row(0).to_vec();
        for r in 0..value.rows() {
            for (v, bb) in value.row_mut(r).iter_mut().zip(&brow) {
                *v += bb;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push(value, Op::AddRow(a, bias), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh()));
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a), rg)
    }

    /// Row-wise layer normalization with `1 × cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = self.value(gamma).row(0).to_vec();
        let b = self.value(beta).row(0).to_vec();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(rs);
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat.set(r, c, h);
                out.set(r, c, h * g[c] + b[c]);
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, rg)
    }

    /// Row-wise softmax; masked-out entries are exactly zero.
    pub fn softmax(&mut self, a: Var, mask: Option<&AttnMask>) -> Var {
        let av = self.value(a);
        let (rows, cols) = av.shape();
        if let Some(m) = mask {
            assert_eq!(m.shape(), (rows, cols), "mask shape mismatch");
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = av.row(r);
            let allowed = |c: usize| mask.is_none_or(|m| m.allows(r, c));
            let max = (0..cols).filter(|&c| allowed(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let orow = out.row_mut(r);
            let mut sum = 0.0;
            for c in 0..cols {
                if allowed(c) {
                    let e = (row[c] - max).exp();
                    orow[c] = e;
                    sum += e;
                }
            }
            for v in orow.iter_mut() {
                *v /= sum;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols(), "slice_cols out of range");
        let mut out = Matrix::zeros(av.rows(), len);
        for r in 0..av.rows() {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(rows.len(), av.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(av.row(r));
        }
        let rg = self.rg(a);
        self.push(out, Op::GatherRows(a, Arc::new(rows.to_vec())), rg)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = av.column_sums().scale(1.0 / av.rows() as f64);
        let rg = self.rg(a);
        self.push(value, Op::MeanRows(a), rg)
    }

    /// Softmax-weighted mean of `weights` under the logits in the `1 × k` row `a`:
    /// `Σ wᵢ exp(aᵢ) / Σ exp(aⱼ)`, clamped to the weight range.
    pub fn expectation(&mut self, a: Var, weights: &[f64]) -> Var {
        let logits = self.value(a);
        assert_eq!(logits.shape(), (1, weights.len()), "expectation expects a 1 × k row");
        let value = softmax_expectation(logits.row(0), weights);
        let rg = self.rg(a);
        self.push(Matrix::from_vec(1, 1, vec![value]), Op::Expectation(a, Arc::new(weights.to_vec())), rg)
    }

    /// Reverse sweep from `seeds` (output node, upstream gradient).
    pub fn backward(&self, seeds: &[(Var, Matrix)]) -> Gradients {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Gradients::default();
        for (v, g) in seeds {
            assert_eq!(self.value(*v).shape(), g.shape(), "seed shape mismatch");
            accumulate(&mut grads, *v, g);
        }
        let start = seeds.iter().map(|(v, _)| v.0).max().map_or(0, |m| m + 1);
        for idx in (0..start).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    out.accumulate(*id, g.shape(), |m| m.add_assign(&g));
                }
                Op::ParamRows(id, rows) => {
                    let shape = self.store.value(*id).shape();
                    out.accumulate(*id, shape, |m| {
                        for (i, &r) in rows.iter().enumerate() {
                            for (d, s) in m.row_mut(r).iter_mut().zip(g.row(i)) {
                                *d += s;
                            }
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, &g.matmul_t(self.value(*b)));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, &self.value(*a).t_matmul(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, &g.matmul(self.value(*b)));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, &g.t_matmul(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, &g);
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, &g);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.rg(*bias) {
                        accumulate(&mut grads, *bias, &g.column_sums());
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, &g);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let d = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *a, &Matrix::from_vec(g.rows(), g.cols(), d));
                    }
                    if self.rg(*b) {
                        let d = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *b, &Matrix::from_vec(g.rows(), g.cols(), d));
                    }
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, &g.scale(*s)),
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let d = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(gg, &x)| {
                            let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
                            let dt = (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x);
                            gg * (0.5 * (1.0 + t) + 0.5 * x * dt)
                        })
                        .collect();
                    accumulate(&mut grads, *a, &Matrix::from_vec(g.rows(), g.cols(), d));
                }
                Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                    let (rows, cols) = g.shape();
                    if self.rg(*gamma) {
                        let mut dg = vec![0.0; cols];
                        for r in 0..rows {
                            for c in 0..cols {
                                dg[c] += g.get(r, c) * xhat.get(r, c);
                            }
                        }
                        accumulate(&mut grads, *gamma, &Matrix::row_vector(dg));
                    }
                    if self.rg(*beta) {
                        accumulate(&mut grads, *beta, &g.column_sums());
                    }
                    if self.rg(*x) {
                        let gam = self.value(*gamma).row(0);
                        let mut dx = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            let dh: Vec<f64> = (0..cols).map(|c| g.get(r, c) * gam[c]).collect();
                            let mean_dh = dh.iter().sum::<f64>() / cols as f64;
                            let mean_dh_h =
                                (0..cols).map(|c| dh[c] * xhat.get(r, c)).sum::<f64>() / cols as f64;
                            for c in 0..cols {
                                dx.set(r, c, rstd[r] * (dh[c] - mean_dh - xhat.get(r, c) * mean_dh_h));
                            }
                        }
                        accumulate(&mut grads, *x, &dx);
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let (rows, cols) = y.shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, &dx);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, &g.transpose()),
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, &dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.value(*p).shape();
                        if self.rg(*p) {
                            let mut dp = Matrix::zeros(rows, cols);
                            for r in 0..rows {
                                dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                            }
                            accumulate(&mut grads, *p, &dp);
                        }
                        offset += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.value(*p).shape();
                        if self.rg(*p) {
                            let d = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                            accumulate(&mut grads, *p, &Matrix::from_vec(rows, cols, d));
                        }
                        offset += rows;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let (r0, c0) = self.value(*a).shape();
                    let mut dx = Matrix::zeros(r0, c0);
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, s) in dx.row_mut(r).iter_mut().zip(g.row(i)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *a, &dx);
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    let scaled = g.scale(1.0 / rows as f64);
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        dx.row_mut(r).copy_from_slice(scaled.row(0));
                    }
                    accumulate(&mut grads, *a, &dx);
                }
                Op::Expectation(a, weights) => {
                    let logits = self.value(*a).row(0);
                    let s = softmax_expectation(logits, weights);
                    let p = softmax(logits);
                    let up = g.get(0, 0);
                    let d = p.iter().zip(weights.iter()).map(|(pi, wi)| up * pi * (wi - s)).collect();
                    accumulate(&mut grads, *a, &Matrix::row_vector(d));
                }
            }
        }
        out
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// `Σ wᵢ exp(λᵢ) / Σ exp(λⱼ)` evaluated as one ratio, so equal logits give the
/// exact weight mean.
pub fn softmax_expectation(logits: &[f64], weights: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (l, w) in logits.iter().zip(weights) {
        let e = (l - max).exp();
        num += w * e;
        den += e;
    }
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (num / den).clamp(lo, hi)
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: &Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}
