//! Reverse-mode differentiation over matrix-valued operations.
//!
//! A [`Tape`] records one forward pass. Every operation appends a node whose
//! value is checked for NaN/Inf; [`Tape::backward`] then walks the nodes in
//! reverse order once and accumulates adjoints into parameter gradients.

use std::sync::Arc;

use super::params::{Gradients, ParamId, ParamStore};
use super::pattern::Pattern;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{sum, Scalar};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Fixed inputs of a Gaussian basis expansion: one scalar and one pair slot
/// per row, kernel centres and widths per column.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec<T> {
    pub inputs: Vec<T>,
    pub slots: Vec<usize>,
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
}

const ROW_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddRow(Var, Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
    Gelu(Var),
    Abs(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    ReplaceRows(Var, Var, Vec<usize>),
    ScalarMul { x: Var, gain: Var },
    Gaussian { alpha: Var, beta: Var, spec: Arc<GaussianSpec<T>> },
    PairDot(Var, Var, Arc<Pattern>),
    RowSoftmax(Var, Arc<Pattern>),
    PatternMatMul(Var, Arc<Pattern>, Var),
    GatherPattern(Var, Arc<Pattern>),
    ScatterPattern(Var, Arc<Pattern>),
    CrossEntropy { logits: Var, rows: Vec<usize>, targets: Vec<usize> },
    BceLogits { logits: Var, labels: Vec<bool> },
    RowNorm(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self { nodes: Vec::new(), param_vars: Vec::new() }
    }
}

fn shape_err(op: &'static str, lhs: [usize; 2], rhs: [usize; 2]) -> Error {
    Error::Shape { op, lhs, rhs }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    /// Binds a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        if self.param_vars.len() < store.len() {
            self.param_vars.resize(store.len(), None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return Ok(v);
        }
        let v = self.push(store.get(id).clone(), Op::Param(id), "param")?;
        self.param_vars[id.0] = Some(v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), "sub")
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(value, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), "scale")
    }

    /// Adds a `1 x C` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(shape_err("add_row", x.shape(), r.shape()));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            for (v, &b) in value.row_mut(i).iter_mut().zip(r.data()) {
                *v += b;
            }
        }
        self.push(value, Op::AddRow(a, row), "add_row")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), "transpose")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat_cols", [rows, 0], self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::new(rows, cols, data)?, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.value(p).cols());
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(shape_err("concat_rows", [0, cols], self.shape(p)));
            }
        }
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let data = parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect();
        self.push(Tensor::new(rows, cols, data)?, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(shape_err("mean_rows", x.shape(), [1, x.cols()]));
        }
        let n = T::of(x.rows() as f64);
        let value = Tensor::from_fn(1, x.cols(), |_, c| sum((0..x.rows()).map(|r| x.get(r, c))) / n);
        self.push(value, Op::MeanRows(a), "mean_rows")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), "sum")
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x * x.normal_cdf());
        self.push(value, Op::Gelu(a), "gelu")
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(T::abs);
        self.push(value, Op::Abs(a), "abs")
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let x = self.value(a);
        if x.len() != rows * cols {
            return Err(shape_err("reshape", x.shape(), [rows, cols]));
        }
        let value = Tensor::new(rows, cols, x.data().to_vec())?;
        self.push(value, Op::Reshape(a), "reshape")
    }

    /// Row lookup: output row `k` is `table[idx[k]]`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::IndexOutOfRange { what: "embedding table", index: bad, len: t.rows() });
        }
        let data = idx.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
        let value = Tensor::new(idx.len(), t.cols(), data)?;
        self.push(value, Op::GatherRows(table, idx.to_vec()), "gather_rows")
    }

    /// Replaces the listed (distinct) rows of `h` by the `1 x C` row `token`.
    pub fn replace_rows(&mut self, h: Var, token: Var, rows: &[usize]) -> Result<Var> {
        let (x, t) = (self.value(h), self.value(token));
        if t.rows() != 1 || t.cols() != x.cols() {
            return Err(shape_err("replace_rows", x.shape(), t.shape()));
        }
        let mut value = x.clone();
        for &r in rows {
            if r >= value.rows() {
                return Err(Error::IndexOutOfRange { what: "rows", index: r, len: value.rows() });
            }
            value.row_mut(r).copy_from_slice(t.data());
        }
        self.push(value, Op::ReplaceRows(h, token, rows.to_vec()), "replace_rows")
    }

    /// `gain * x` with a learnable `1 x 1` gain.
    pub fn scalar_mul(&mut self, x: Var, gain: Var) -> Result<Var> {
        let g = self.value(gain).item()?;
        let value = self.value(x).map(|v| g * v);
        self.push(value, Op::ScalarMul { x, gain }, "scalar_mul")
    }

    /// Gaussian basis expansion: row `p`, column `k` holds
    /// `-exp(-((alpha[s] x + beta[s] - mu_k) / sigma_k)^2 / 2) / (sqrt(2 pi) sigma_k)`
    /// with `x = inputs[p]`, `s = slots[p]`.
    pub fn gaussian_basis(&mut self, alpha: Var, beta: Var, spec: Arc<GaussianSpec<T>>) -> Result<Var> {
        let (a, b) = (self.value(alpha), self.value(beta));
        if a.cols() != 1 || b.shape() != a.shape() || spec.mu.len() != spec.sigma.len() {
            return Err(shape_err("gaussian_basis", a.shape(), b.shape()));
        }
        if spec.inputs.len() != spec.slots.len() {
            return Err(shape_err("gaussian_basis", [spec.inputs.len(), 1], [spec.slots.len(), 1]));
        }
        if let Some(&bad) = spec.slots.iter().find(|&&s| s >= a.rows()) {
            return Err(Error::IndexOutOfRange { what: "pair slots", index: bad, len: a.rows() });
        }
        let k = spec.mu.len();
        let mut data = Vec::with_capacity(spec.inputs.len() * k);
        for (&x, &s) in spec.inputs.iter().zip(&spec.slots) {
            let z = a.data()[s] * x + b.data()[s];
            data.extend(spec.mu.iter().zip(&spec.sigma).map(|(&mu, &sigma)| gaussian_kernel(z, mu, sigma)));
        }
        let value = Tensor::new(spec.inputs.len(), k, data)?;
        self.push(value, Op::Gaussian { alpha, beta, spec }, "gaussian_basis")
    }

    /// Entry `e = (r, c)` of the pattern gets `q[r] . k[c]`; output is `nnz x 1`.
    pub fn pair_dot(&mut self, q: Var, k: Var, pattern: Arc<Pattern>) -> Result<Var> {
        let (qv, kv) = (self.value(q), self.value(k));
        if qv.cols() != kv.cols() || qv.rows() != pattern.rows() || kv.rows() != pattern.cols() {
            return Err(shape_err("pair_dot", qv.shape(), kv.shape()));
        }
        let data = pattern
            .entries()
            .map(|(r, c)| sum(qv.row(r).iter().zip(kv.row(c)).map(|(&x, &y)| x * y)))
            .collect();
        self.push(Tensor::column(data), Op::PairDot(q, k, pattern), "pair_dot")
    }

    /// Softmax over the entries of each pattern row. Rows without entries
    /// contribute nothing, so their dense weights stay zero.
    pub fn row_softmax(&mut self, scores: Var, pattern: Arc<Pattern>) -> Result<Var> {
        let s = self.value(scores);
        if s.shape() != [pattern.nnz(), 1] {
            return Err(shape_err("row_softmax", s.shape(), [pattern.nnz(), 1]));
        }
        let value = Tensor::column(row_softmax_values(s.data(), &pattern));
        self.push(value, Op::RowSoftmax(scores, pattern), "row_softmax")
    }

    /// Sparse-times-dense: `out[r] = sum_e w_e v[c_e]` over the entries of row `r`.
    pub fn pattern_matmul(&mut self, weights: Var, pattern: Arc<Pattern>, v: Var) -> Result<Var> {
        let (w, vv) = (self.value(weights), self.value(v));
        if w.shape() != [pattern.nnz(), 1] || vv.rows() != pattern.cols() {
            return Err(shape_err("pattern_matmul", w.shape(), vv.shape()));
        }
        let mut out = Tensor::zeros(pattern.rows(), vv.cols());
        for r in 0..pattern.rows() {
            for e in pattern.range(r) {
                let we = w.data()[e];
                let src = vv.row(pattern.col(e));
                for (o, &x) in out.row_mut(r).iter_mut().zip(src) {
                    *o += we * x;
                }
            }
        }
        self.push(out, Op::PatternMatMul(weights, pattern, v), "pattern_matmul")
    }

    /// Reads the pattern entries out of a dense matrix into an `nnz x 1` column.
    pub fn gather_pattern(&mut self, dense: Var, pattern: Arc<Pattern>) -> Result<Var> {
        let d = self.value(dense);
        if d.shape() != [pattern.rows(), pattern.cols()] {
            return Err(shape_err("gather_pattern", d.shape(), [pattern.rows(), pattern.cols()]));
        }
        let data = pattern.entries().map(|(r, c)| d.get(r, c)).collect();
        self.push(Tensor::column(data), Op::GatherPattern(dense, pattern), "gather_pattern")
    }

    /// Writes an `nnz x 1` column into a dense zero matrix.
    pub fn scatter_pattern(&mut self, values: Var, pattern: Arc<Pattern>) -> Result<Var> {
        let v = self.value(values);
        if v.shape() != [pattern.nnz(), 1] {
            return Err(shape_err("scatter_pattern", v.shape(), [pattern.nnz(), 1]));
        }
        let mut out = Tensor::zeros(pattern.rows(), pattern.cols());
        for (e, (r, c)) in pattern.entries().enumerate() {
            out.set(r, c, v.data()[e]);
        }
        self.push(out, Op::ScatterPattern(values, pattern), "scatter_pattern")
    }

    /// Summed cross-entropy `-log softmax(logits[row])[target]` over the listed rows.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[usize], targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        if rows.len() != targets.len() {
            return Err(shape_err("cross_entropy", [rows.len(), 1], [targets.len(), 1]));
        }
        let mut total = T::zero();
        for (&r, &t) in rows.iter().zip(targets) {
            if r >= x.rows() || t >= x.cols() {
                return Err(Error::IndexOutOfRange { what: "cross_entropy", index: r.max(t), len: x.rows() });
            }
            let row = x.row(r);
            total += log_sum_exp(row) - row[t];
        }
        let op = Op::CrossEntropy { logits, rows: rows.to_vec(), targets: targets.to_vec() };
        self.push(Tensor::scalar(total), op, "cross_entropy")
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `labels`; zero
    /// when there are no entries.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[bool]) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != [labels.len(), 1] {
            return Err(shape_err("bce_with_logits", z.shape(), [labels.len(), 1]));
        }
        let total = sum(z.data().iter().zip(labels).map(|(&zi, &y)| softplus(zi) - if y { zi } else { T::zero() }));
        let value = if labels.is_empty() { T::zero() } else { total / T::of(labels.len() as f64) };
        let op = Op::BceLogits { logits, labels: labels.to_vec() };
        self.push(Tensor::scalar(value), op, "bce_with_logits")
    }

    /// Normalises every row to zero mean and unit variance.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..x.rows() {
            let (_, inv) = row_stats(x.row(r));
            let mean = mean(x.row(r));
            for v in value.row_mut(r) {
                *v = (*v - mean) * inv;
            }
        }
        self.push(value, Op::RowNorm(a), "row_norm")
    }

    /// Gradients of the scalar `loss` with respect to every parameter of `store`.
    pub fn backward(&self, loss: Var, store: &ParamStore<T>) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut out = Gradients::zeros_like(store);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, t: Tensor<T>| -> Result<()> {
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&t),
                    slot @ None => {
                        *slot = Some(t);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.tensors[id.0].add_assign(&g)?,
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul(&bv.transpose())?)?;
                    acc(*b, av.transpose().matmul(&g)?)?;
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone())?;
                    acc(*b, g)?;
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x))?;
                    acc(*a, g)?;
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, g.zip_map(bv, "mul", |x, y| x * y)?)?;
                    acc(*b, g.zip_map(av, "mul", |x, y| x * y)?)?;
                }
                Op::Scale(a, c) => acc(*a, g.map(|x| x * *c))?,
                Op::AddRow(a, row) => {
                    let sums = Tensor::from_fn(1, g.cols(), |_, c| sum((0..g.rows()).map(|r| g.get(r, c))));
                    acc(*row, sums)?;
                    acc(*a, g)?;
                }
                Op::Transpose(a) => acc(*a, g.transpose())?,
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        acc(p, Tensor::from_fn(g.rows(), w, |r, c| g.get(r, start + c)))?;
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        acc(p, Tensor::from_fn(h, g.cols(), |r, c| g.get(start + r, c)))?;
                        start += h;
                    }
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).rows();
                    let n = T::of(rows as f64);
                    acc(*a, Tensor::from_fn(rows, g.cols(), |_, c| g.get(0, c) / n))?;
                }
                Op::Sum(a) => {
                    let [r, c] = self.shape(*a);
                    acc(*a, Tensor::filled(r, c, g.item()?))?;
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    acc(*a, g.zip_map(x, "gelu", |gi, xi| gi * (xi.normal_cdf() + xi * xi.normal_pdf()))?)?;
                }
                Op::Abs(a) => {
                    let x = self.value(*a);
                    let sign = |v: T| if v > T::zero() { T::one() } else if v < T::zero() { -T::one() } else { T::zero() };
                    acc(*a, g.zip_map(x, "abs", |gi, xi| gi * sign(xi))?)?;
                }
                Op::Reshape(a) => {
                    let [r, c] = self.shape(*a);
                    acc(*a, Tensor::new(r, c, g.into_data())?)?;
                }
                Op::GatherRows(table, idx) => {
                    let [r, c] = self.shape(*table);
                    let mut gt = Tensor::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (dst, &src) in gt.row_mut(i).iter_mut().zip(g.row(k)) {
                            *dst += src;
                        }
                    }
                    acc(*table, gt)?;
                }
                Op::ReplaceRows(h, token, rows) => {
                    let mut gh = g.clone();
                    let mut gt = Tensor::zeros(1, g.cols());
                    for &r in rows {
                        for (dst, &src) in gt.data_mut().iter_mut().zip(g.row(r)) {
                            *dst += src;
                        }
                        gh.row_mut(r).iter_mut().for_each(|v| *v = T::zero());
                    }
                    acc(*h, gh)?;
                    acc(*token, gt)?;
                }
                Op::ScalarMul { x, gain } => {
                    let xv = self.value(*x);
                    let gain_v = self.value(*gain).item()?;
                    let g_gain = sum(g.data().iter().zip(xv.data()).map(|(&a, &b)| a * b));
                    acc(*gain, Tensor::scalar(g_gain))?;
                    acc(*x, g.map(|v| v * gain_v))?;
                }
                Op::Gaussian { alpha, beta, spec } => {
                    let out_v = &node.value;
                    let (a, b) = (self.value(*alpha), self.value(*beta));
                    let mut ga = Tensor::zeros(a.rows(), 1);
                    let mut gb = Tensor::zeros(a.rows(), 1);
                    for (p, (&x, &s)) in spec.inputs.iter().zip(&spec.slots).enumerate() {
                        let z = a.data()[s] * x + b.data()[s];
                        // d phi / d z = -phi * u / sigma with u = (z - mu) / sigma
                        let gz = sum(spec.mu.iter().zip(&spec.sigma).enumerate().map(|(k, (&mu, &sigma))| {
                            let u = (z - mu) / sigma;
                            -g.get(p, k) * out_v.get(p, k) * u / sigma
                        }));
                        ga.data_mut()[s] += gz * x;
                        gb.data_mut()[s] += gz;
                    }
                    acc(*alpha, ga)?;
                    acc(*beta, gb)?;
                }
                Op::PairDot(q, k, pattern) => {
                    let (qv, kv) = (self.value(*q), self.value(*k));
                    let mut gq = Tensor::zeros(qv.rows(), qv.cols());
                    let mut gk = Tensor::zeros(kv.rows(), kv.cols());
                    for (e, (r, c)) in pattern.entries().enumerate() {
                        let ge = g.data()[e];
                        for (dst, &src) in gq.row_mut(r).iter_mut().zip(kv.row(c)) {
                            *dst += ge * src;
                        }
                        for (dst, &src) in gk.row_mut(c).iter_mut().zip(qv.row(r)) {
                            *dst += ge * src;
                        }
                    }
                    acc(*q, gq)?;
                    acc(*k, gk)?;
                }
                Op::RowSoftmax(scores, pattern) => {
                    let w = node.value.data();
                    let mut gs = vec![T::zero(); w.len()];
                    for r in 0..pattern.rows() {
                        let range = pattern.range(r);
                        let dot = sum(range.clone().map(|e| w[e] * g.data()[e]));
                        for e in range {
                            gs[e] = w[e] * (g.data()[e] - dot);
                        }
                    }
                    acc(*scores, Tensor::column(gs))?;
                }
                Op::PatternMatMul(weights, pattern, v) => {
                    let (w, vv) = (self.value(*weights), self.value(*v));
                    let mut gw = vec![T::zero(); pattern.nnz()];
                    let mut gv = Tensor::zeros(vv.rows(), vv.cols());
                    for r in 0..pattern.rows() {
                        let gr = g.row(r);
                        for e in pattern.range(r) {
                            let c = pattern.col(e);
                            gw[e] = sum(gr.iter().zip(vv.row(c)).map(|(&a, &b)| a * b));
                            let we = w.data()[e];
                            for (dst, &src) in gv.row_mut(c).iter_mut().zip(gr) {
                                *dst += we * src;
                            }
                        }
                    }
                    acc(*weights, Tensor::column(gw))?;
                    acc(*v, gv)?;
                }
                Op::GatherPattern(dense, pattern) => {
                    let mut gd = Tensor::zeros(pattern.rows(), pattern.cols());
                    for (e, (r, c)) in pattern.entries().enumerate() {
                        gd.set(r, c, g.data()[e]);
                    }
                    acc(*dense, gd)?;
                }
                Op::ScatterPattern(values, pattern) => {
                    acc(*values, Tensor::column(pattern.entries().map(|(r, c)| g.get(r, c)).collect()))?;
                }
                Op::CrossEntropy { logits, rows, targets } => {
                    let x = self.value(*logits);
                    let scale = g.item()?;
                    let mut gx = Tensor::zeros(x.rows(), x.cols());
                    for (&r, &t) in rows.iter().zip(targets) {
                        let row = x.row(r);
                        let lse = log_sum_exp(row);
                        for (c, dst) in gx.row_mut(r).iter_mut().enumerate() {
                            let p = (row[c] - lse).exp();
                            *dst += scale * (p - if c == t { T::one() } else { T::zero() });
                        }
                    }
                    acc(*logits, gx)?;
                }
                Op::BceLogits { logits, labels } => {
                    if labels.is_empty() {
                        continue;
                    }
                    let z = self.value(*logits);
                    let scale = g.item()? / T::of(labels.len() as f64);
                    let gz = z
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&zi, &y)| scale * (sigmoid(zi) - if y { T::one() } else { T::zero() }))
                        .collect();
                    acc(*logits, Tensor::column(gz))?;
                }
                Op::RowNorm(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut gx = Tensor::zeros(x.rows(), x.cols());
                    let n = T::of(x.cols() as f64);
                    for r in 0..x.rows() {
                        let (_, inv) = row_stats(x.row(r));
                        let (gr, yr) = (g.row(r), y.row(r));
                        let g_mean = sum(gr.iter().copied()) / n;
                        let gy_mean = sum(gr.iter().zip(yr).map(|(&a, &b)| a * b)) / n;
                        for ((dst, &gi), &yi) in gx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *dst = inv * (gi - g_mean - yi * gy_mean);
                        }
                    }
                    acc(*a, gx)?;
                }
            }
        }
        Ok(out)
    }
}

/// One Gaussian basis value for pre-activation `z`.
pub fn gaussian_kernel<T: Scalar>(z: T, mu: T, sigma: T) -> T {
    let sigma = sigma.abs();
    let u = (z - mu) / sigma;
    let norm = T::one() / ((T::PI() + T::PI()).sqrt() * sigma);
    -norm * (-(u * u) * T::of(0.5)).exp()
}

/// Per-row softmax over pattern entries.
pub fn row_softmax_values<T: Scalar>(scores: &[T], pattern: &Pattern) -> Vec<T> {
    let mut out = vec![T::zero(); scores.len()];
    for r in 0..pattern.rows() {
        let range = pattern.range(r);
        if range.is_empty() {
            continue;
        }
        let max = scores[range.clone()].iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for e in range.clone() {
            out[e] = (scores[e] - max).exp();
            total += out[e];
        }
        for e in range {
            out[e] /= total;
        }
    }
    out
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    max + sum(row.iter().map(|&v| (v - max).exp())).ln()
}

fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn mean<T: Scalar>(row: &[T]) -> T {
    sum(row.iter().copied()) / T::of(row.len().max(1) as f64)
}

/// Variance and inverse standard deviation of a row.
fn row_stats<T: Scalar>(row: &[T]) -> (T, T) {
    let m = mean(row);
    let var = sum(row.iter().map(|&v| (v - m) * (v - m))) / T::of(row.len().max(1) as f64);
    (var, T::one() / (var + T::of(ROW_NORM_EPS)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Tensor<f64>)]) -> (ParamStore<f64>, Vec<ParamId>) {
        let mut store = ParamStore::new();
        let ids = values.iter().map(|(n, t)| store.add(*n, t.clone()).unwrap()).collect();
        (store, ids)
    }

    #[test]
    fn square_gradient() {
        let (store, ids) = store_with(&[("x", Tensor::scalar(3.0))]);
        let mut tape = Tape::new();
        let x = tape.param(&store, ids[0]).unwrap();
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y, &store).unwrap();
        assert_eq!(g.get(ids[0]).item().unwrap(), 6.0);
    }

    #[test]
    fn unreached_parameter_has_zero_gradient() {
        let (store, ids) = store_with(&[("x", Tensor::scalar(3.0)), ("unused", Tensor::filled(2, 2, 1.0))]);
        let mut tape = Tape::new();
        let x = tape.param(&store, ids[0]).unwrap();
        let y = tape.scale(x, 2.0).unwrap();
        let g = tape.backward(y, &store).unwrap();
        assert_eq!(g.get(ids[1]), &Tensor::zeros(2, 2));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let (store, ids) = store_with(&[("x", Tensor::zeros(2, 1))]);
        let mut tape = Tape::new();
        let x = tape.param(&store, ids[0]).unwrap();
        assert!(matches!(tape.backward(x, &store), Err(Error::NonScalarLoss([2, 1]))));
    }

    #[test]
    fn non_finite_values_raise() {
        let mut tape = Tape::<f64>::new();
        assert!(matches!(tape.constant(Tensor::scalar(f64::NAN)), Err(Error::NonFinite(_))));
        let big = tape.constant(Tensor::scalar(1e300)).unwrap();
        assert!(matches!(tape.mul(big, big), Err(Error::NonFinite("mul"))));
    }

    #[test]
    fn mean_of_single_row_is_that_row() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap()).unwrap();
        let m = tape.mean_rows(x).unwrap();
        assert_eq!(tape.value(m), tape.value(x));
    }

    #[test]
    fn gelu_reference_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::column(vec![0.0, 1.0, -10.0, 30.0])).unwrap();
        let y = tape.gelu(x).unwrap();
        let v = tape.value(y).data();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!(v[2].abs() < 1e-20);
        assert_eq!(v[3], 30.0);
    }

    #[test]
    fn softmax_uniform_and_single_entry() {
        let p = Pattern::full(2, 4);
        let w = row_softmax_values(&[0.3; 8], &p);
        assert!(w.iter().all(|&v: &f64| (v - 0.25f64).abs() < 1e-15));
        let single = Pattern::from_rows(2, 3, vec![vec![1], vec![2]]);
        assert_eq!(row_softmax_values(&[-7.0, 12.0], &single), vec![1.0, 1.0]);
    }

    #[test]
    fn gaussian_kernel_peak() {
        let sigma = 0.25;
        let expected = -1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        assert_eq!(gaussian_kernel(0.5, 0.5, sigma), expected);
    }

    #[test]
    fn cross_entropy_uniform() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(3, 5)).unwrap();
        let l = tape.cross_entropy(x, &[0, 2], &[1, 4]).unwrap();
        assert!((tape.value(l).item().unwrap() - 2.0 * 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bce_half_probability() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::zeros(4, 1)).unwrap();
        let l = tape.bce_with_logits(z, &[true, false, true, true]).unwrap();
        assert!((tape.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-15);
        let empty = tape.constant(Tensor::zeros(0, 1)).unwrap();
        let l = tape.bce_with_logits(empty, &[]).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);
    }
}
