//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Each method appends a
//! node holding its output value, so forward evaluation is eager and shape
//! errors surface at construction. [`Graph::backward`] walks the tape in
//! reverse and returns gradients for the leaves created with
//! [`Graph::param`]; constants and everything depending only on constants
//! are skipped entirely.

use alloc::vec;
use alloc::vec::Vec;

use super::noise::{gaussian_noise, NoiseKey};
use super::tensor::Tensor;
use super::{sigmoid, softplus, Real};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Ragged index lists in CSR layout, one bag per batch row. Used by
/// [`Graph::gather_mean`] for embedding lookups with mean pooling.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bags {
    offsets: Vec<usize>,
    indices: Vec<u32>,
}

impl Bags {
    pub fn new() -> Self {
        Self {
            offsets: vec![0],
            indices: Vec::new(),
        }
    }

    pub fn with_capacity(rows: usize, values: usize) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        offsets.push(0);
        Self {
            offsets,
            indices: Vec::with_capacity(values),
        }
    }

    /// One single-index bag per row.
    pub fn singletons(indices: &[u32]) -> Self {
        Self {
            offsets: (0..=indices.len()).collect(),
            indices: indices.to_vec(),
        }
    }

    pub fn push(&mut self, bag: &[u32]) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.indices.extend_from_slice(bag);
        self.offsets.push(self.indices.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bag(&self, row: usize) -> &[u32] {
        &self.indices[self.offsets[row]..self.offsets[row + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.len()).map(move |i| self.bag(i))
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Mean(Var),
    MeanRows(Var),
    SumRows(Var),
    SumSq(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Bags),
    Bce(Var, Vec<T>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Gradients of the trainable leaves reachable from a loss.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, with exact zeros when `v` is unreachable.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(rows, cols))
    }
}

/// The computation tape.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn mismatch<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Error {
    Error::ShapeMismatch {
        op,
        left: vec![a.rows(), a.cols()],
        right: vec![b.rows(), b.cols()],
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Copies the current value of `v` into a new constant, cutting the
    /// gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// Standard-normal constant drawn from the counter-keyed noise source.
    pub fn gaussian_noise(&mut self, rows: usize, cols: usize, key: NoiseKey) -> Var {
        self.constant(gaussian_noise(rows, cols, key))
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(mismatch("matmul", va, vb));
        }
        let out = matmul_nn(va, vb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), out, rg))
    }

    /// Elementwise sum. `b` may also be a single row `[1, m]`, which is
    /// broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = if va.same_shape(vb) {
            let mut o = va.clone();
            o.add_assign(vb);
            o
        } else if vb.rows() == 1 && vb.cols() == va.cols() {
            let mut o = va.clone();
            let m = va.cols();
            for (i, x) in o.data_mut().iter_mut().enumerate() {
                *x = *x + vb.data()[i % m];
            }
            o
        } else {
            return Err(mismatch("add", va, vb));
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(mismatch("sub", va, vb));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x - y)
            .collect();
        let out = Tensor::matrix(va.rows(), va.cols(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Sub(a, b), out, rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(mismatch("mul", va, vb));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::matrix(va.rows(), va.cols(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Mul(a, b), out, rg))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(Op::Scale(a, c), out, rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x + c);
        let rg = self.rg(&[a]);
        self.push(Op::AddScalar(a, c), out, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(&[a]);
        self.push(Op::Relu(a), out, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(Op::Sigmoid(a), out, rg)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        let rg = self.rg(&[a]);
        self.push(Op::Softplus(a), out, rg)
    }

    /// Mean over all entries, `[1, 1]`.
    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let s: T = va.data().iter().copied().sum();
        let out = Tensor::scalar(s / T::lit(va.len() as f64));
        let rg = self.rg(&[a]);
        self.push(Op::Mean(a), out, rg)
    }

    /// Column means over the batch dimension, `[n, m] -> [1, m]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let (n, m) = (va.rows(), va.cols());
        let mut acc = vec![T::zero(); m];
        for i in 0..n {
            for (s, &x) in acc.iter_mut().zip(va.row(i)) {
                *s = *s + x;
            }
        }
        let inv = T::one() / T::lit(n as f64);
        let data = acc.into_iter().map(|s| s * inv).collect();
        let out = Tensor::matrix(1, m, data).expect("non-empty");
        let rg = self.rg(&[a]);
        self.push(Op::MeanRows(a), out, rg)
    }

    /// Per-row sum, `[n, m] -> [n, 1]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = (0..va.rows())
            .map(|i| va.row(i).iter().copied().sum())
            .collect();
        let out = Tensor::matrix(va.rows(), 1, data).expect("non-empty");
        let rg = self.rg(&[a]);
        self.push(Op::SumRows(a), out, rg)
    }

    /// Sum of squares of all entries, `[1, 1]`.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().map(|&x| x * x).sum();
        let rg = self.rg(&[a]);
        self.push(Op::SumSq(a), Tensor::scalar(s), rg)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Invalid("concat of zero tensors".into()))?;
        let n = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let vp = self.value(p);
            if vp.rows() != n {
                return Err(mismatch("concat", self.value(first), vp));
            }
            cols += vp.cols();
        }
        let mut data = Vec::with_capacity(n * cols);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::matrix(n, cols, data)?;
        let rg = self.rg(parts);
        Ok(self.push(Op::Concat(parts.to_vec()), out, rg))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let va = self.value(a);
        if start >= end || end > va.cols() {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: vec![va.rows(), va.cols()],
                right: vec![start, end],
            });
        }
        let mut data = Vec::with_capacity(va.rows() * (end - start));
        for i in 0..va.rows() {
            data.extend_from_slice(&va.row(i)[start..end]);
        }
        let out = Tensor::matrix(va.rows(), end - start, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(Op::SliceCols(a, start), out, rg))
    }

    /// Embedding lookup: row `r` of the output is the mean of the `table`
    /// rows listed in bag `r`.
    pub fn gather_mean(&mut self, table: Var, bags: &Bags) -> Result<Var> {
        let vt = self.value(table);
        let (vocab, d) = (vt.rows(), vt.cols());
        if bags.is_empty() {
            return Err(Error::Invalid("gather over zero rows".into()));
        }
        let mut data = vec![T::zero(); bags.len() * d];
        for (r, bag) in bags.iter().enumerate() {
            if bag.is_empty() {
                return Err(Error::EmptyBag(r));
            }
            let out = &mut data[r * d..(r + 1) * d];
            for &ix in bag {
                if ix as usize >= vocab {
                    return Err(Error::IndexOutOfRange {
                        field: "gather".into(),
                        index: ix,
                        vocab,
                    });
                }
                for (o, &x) in out.iter_mut().zip(vt.row(ix as usize)) {
                    *o = *o + x;
                }
            }
            if bag.len() > 1 {
                let inv = T::one() / T::lit(bag.len() as f64);
                out.iter_mut().for_each(|o| *o = *o * inv);
            }
        }
        let out = Tensor::matrix(bags.len(), d, data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(Op::Gather(table, bags.clone()), out, rg))
    }

    /// Mean binary cross-entropy of probabilities `prob` (`[n, 1]`) against
    /// 0/1 `labels`, with probabilities clamped to
    /// `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce(&mut self, prob: Var, labels: &[T]) -> Result<Var> {
        let vp = self.value(prob);
        if vp.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "bce",
                left: vec![vp.rows(), vp.cols()],
                right: vec![labels.len()],
            });
        }
        let out = Tensor::scalar(bce_value(vp.data(), labels));
        let rg = self.rg(&[prob]);
        Ok(self.push(Op::Bce(prob, labels.to_vec()), out, rg))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
        }
        // Only trainable leaves keep their gradient.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    accumulate(grads, *a, matmul_nt(g, vb));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, matmul_tn(va, g));
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    let vb = self.value(*b);
                    if vb.same_shape(g) {
                        accumulate(grads, *b, g.clone());
                    } else {
                        accumulate(grads, *b, column_sums(g));
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, hadamard(g, self.value(*b)));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, hadamard(g, self.value(*a)));
                }
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|x| x * *c)),
            Op::AddScalar(a, _) => accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                let va = self.value(*a);
                let d = zip_map(g, va, |gi, x| if x > T::zero() { gi } else { T::zero() });
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = zip_map(g, out, |gi, y| gi * y * (T::one() - y));
                accumulate(grads, *a, d);
            }
            Op::Softplus(a) => {
                let d = zip_map(g, self.value(*a), |gi, x| gi * sigmoid(x));
                accumulate(grads, *a, d);
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                let s = g.item() / T::lit(va.len() as f64);
                accumulate(grads, *a, va.map(|_| s));
            }
            Op::MeanRows(a) => {
                let va = self.value(*a);
                let inv = T::one() / T::lit(va.rows() as f64);
                let mut d = Tensor::zeros(va.rows(), va.cols());
                for i in 0..va.rows() {
                    for (o, &gi) in d.row_mut(i).iter_mut().zip(g.data()) {
                        *o = gi * inv;
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::SumRows(a) => {
                let va = self.value(*a);
                let mut d = Tensor::zeros(va.rows(), va.cols());
                for i in 0..va.rows() {
                    let gi = g.data()[i];
                    d.row_mut(i).iter_mut().for_each(|o| *o = gi);
                }
                accumulate(grads, *a, d);
            }
            Op::SumSq(a) => {
                let two_g = T::lit(2.0) * g.item();
                accumulate(grads, *a, self.value(*a).map(|x| two_g * x));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.wants(p) {
                        let mut d = Tensor::zeros(g.rows(), w);
                        for i in 0..g.rows() {
                            d.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + w]);
                        }
                        accumulate(grads, p, d);
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let va = self.value(*a);
                let mut d = Tensor::zeros(va.rows(), va.cols());
                let w = g.cols();
                for i in 0..va.rows() {
                    d.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                }
                accumulate(grads, *a, d);
            }
            Op::Gather(table, bags) => {
                let vt = self.value(*table);
                let mut d = Tensor::zeros(vt.rows(), vt.cols());
                for (r, bag) in bags.iter().enumerate() {
                    let inv = T::one() / T::lit(bag.len() as f64);
                    for &ix in bag {
                        for (o, &gi) in d.row_mut(ix as usize).iter_mut().zip(g.row(r)) {
                            *o = *o + gi * inv;
                        }
                    }
                }
                accumulate(grads, *table, d);
            }
            Op::Bce(prob, labels) => {
                let vp = self.value(*prob);
                let eps = T::lit(PROB_EPS);
                let hi = T::one() - eps;
                let scale = g.item() / T::lit(labels.len() as f64);
                let data = vp
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&p, &o)| {
                        if p < eps || p > hi {
                            T::zero()
                        } else {
                            scale * (-o / p + (T::one() - o) / (T::one() - p))
                        }
                    })
                    .collect();
                let d = Tensor::matrix(vp.rows(), vp.cols(), data).expect("same shape");
                accumulate(grads, *prob, d);
            }
        }
    }
}

/// Mean clamped binary cross-entropy; shared by the graph op and by the
/// value-level helpers.
pub(crate) fn bce_value<T: Real>(probs: &[T], labels: &[T]) -> T {
    let eps = T::lit(PROB_EPS);
    let hi = T::one() - eps;
    let mut total = T::zero();
    for (&p, &o) in probs.iter().zip(labels) {
        let p = p.max(eps).min(hi);
        total = total - o * p.ln() - (T::one() - o) * (T::one() - p).ln();
    }
    total / T::lit(probs.len() as f64)
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, d: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::matrix(a.rows(), a.cols(), data).expect("same shape")
}

fn hadamard<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    zip_map(a, b, |x, y| x * y)
}

fn column_sums<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let mut d = Tensor::zeros(1, g.cols());
    for i in 0..g.rows() {
        for (o, &x) in d.data_mut().iter_mut().zip(g.row(i)) {
            *o = *o + x;
        }
    }
    d
}

/// `a[n,k] * b[k,m]`.
fn matmul_nn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(p)) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `g[n,m] * b[k,m]^T -> [n,k]`.
fn matmul_nt<T: Real>(g: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, k) = (g.rows(), b.rows());
    let mut out = Tensor::zeros(n, k);
    for i in 0..n {
        let grow = g.row(i);
        for p in 0..k {
            let s: T = grow.iter().zip(b.row(p)).map(|(&x, &y)| x * y).sum();
            out.row_mut(i)[p] = s;
        }
    }
    out
}

/// `a[n,k]^T * g[n,m] -> [k,m]`.
fn matmul_tn<T: Real>(a: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (a.rows(), a.cols(), g.cols());
    let mut out = Tensor::zeros(k, m);
    for i in 0..n {
        let grow = g.row(i);
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (o, &gv) in out.row_mut(p).iter_mut().zip(grow) {
                *o = *o + av * gv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_and_relu_values() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(1, 2, &[0.0, -2.5]));
        let s = g.sigmoid(x);
        let r = g.relu(x);
        assert_eq!(g.value(s).data()[0], 0.5);
        assert_eq!(g.value(r).data()[1], 0.0);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t(2, 1, &[3.0, 4.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 4.0]);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
        let c = g.constant(Tensor::zeros(3, 1));
        assert!(matches!(g.add(a, c), Err(Error::ShapeMismatch { op: "add", .. })));
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 0.25);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(2, 2));
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_params_have_no_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::scalar(2.0));
        let b = g.param(Tensor::scalar(5.0));
        let y = g.sum_sq(a);
        let grads = g.backward(y).unwrap();
        assert!(grads.get(b).is_none());
        assert_eq!(grads.get_or_zeros(b, 1, 1).item(), 0.0);
    }

    #[test]
    fn gather_mean_pools_rows() {
        let mut g = Graph::<f64>::new();
        let table = g.param(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let mut bags = Bags::new();
        bags.push(&[2]);
        bags.push(&[0, 1]);
        let e = g.gather_mean(table, &bags).unwrap();
        assert_eq!(g.value(e).data(), &[5.0, 6.0, 2.0, 3.0]);
        let s = g.sum_sq(e);
        let grads = g.backward(s).unwrap();
        // d/d row0 = 2 * pooled / 2
        assert_eq!(grads.get(table).unwrap().row(0), &[2.0, 3.0]);
        assert_eq!(grads.get(table).unwrap().row(2), &[10.0, 12.0]);

        let mut bad = Bags::new();
        bad.push(&[3]);
        assert!(matches!(
            g.gather_mean(table, &bad),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        let mut empty = Bags::new();
        empty.push(&[]);
        assert_eq!(g.gather_mean(table, &empty), Err(Error::EmptyBag(0)));
    }

    #[test]
    fn bce_matches_ln2_and_clamps() {
        let mut g = Graph::<f64>::new();
        let p = g.constant(t(2, 1, &[0.5, 0.5]));
        let l = g.bce(p, &[1.0, 0.0]).unwrap();
        assert!((g.value(l).item() - core::f64::consts::LN_2).abs() < 1e-12);
        let q = g.constant(t(1, 1, &[1.0]));
        let l = g.bce(q, &[1.0]).unwrap();
        assert!(g.value(l).item() < 1e-6);
        let l = g.bce(q, &[0.0]).unwrap();
        assert!(g.value(l).item().is_finite());
    }

    #[test]
    fn row_broadcast_add_sums_bias_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(3, 2, &[0.0; 6]));
        let b = g.param(t(1, 2, &[1.0, 2.0]));
        let y = g.add(x, b).unwrap();
        let s = g.sum_rows(y);
        let m = g.mean(s);
        let grads = g.backward(m).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0]);
    }
}
