//! Wengert tape: every op appends a node holding its forward value; `backward`
//! walks the nodes in reverse insertion order, which is a reverse topological
//! order because inputs always precede their consumers.

use std::sync::Arc;

use crate::error::{AutodiffError, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    AddBias(Var, Var),
    MeanRows(Var),
    SumRows(Var),
    SumAll(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SoftmaxRows(Var),
    GatherRows { x: Var, idx: Vec<usize> },
    SpMM { adj: Arc<CsrMatrix<T>>, x: Var },
    BceWithLogits { logits: Var, labels: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: (usize, usize), b: (usize, usize)) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a,
        right: b,
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        self.nodes.get(v.0).ok_or(AutodiffError::UnknownVar(v.0))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf: receives a gradient from [`Tape::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: no gradient is propagated into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        if av.cols() != bv.rows() {
            return Err(mismatch("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = Tensor::zeros(m, n);
        gemm_nn(av.data(), bv.data(), out.data_mut(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.node(a)?.value.transpose();
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        if av.shape() != bv.shape() {
            return Err(mismatch(op, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.node(a)?.value.map(|x| x * s);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Scale(a, s), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.node(a)?.value.map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(a);
        Ok(self.push(out, Op::Relu(a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.node(a)?.value.map(sigmoid);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Sigmoid(a), rg))
    }

    /// Adds the `1 x cols` row `b` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (&self.node(x)?.value, &self.node(b)?.value);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(mismatch("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &bb) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    /// Column-wise mean over rows: `n x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let av = &self.node(a)?.value;
        if av.rows() == 0 {
            return Err(AutodiffError::EmptyInput { op: "mean_rows" });
        }
        let mut out = column_sums(av);
        let inv = T::one() / T::from_f64(av.rows() as f64);
        out.data_mut().iter_mut().for_each(|v| *v *= inv);
        let rg = self.rg(a);
        Ok(self.push(out, Op::MeanRows(a), rg))
    }

    /// Column-wise sum over rows: `n x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let av = &self.node(a)?.value;
        if av.rows() == 0 {
            return Err(AutodiffError::EmptyInput { op: "sum_rows" });
        }
        let out = column_sums(av);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SumRows(a), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.value.sum();
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s), Op::SumAll(a), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(AutodiffError::EmptyInput { op: "concat_cols" })?;
        let rows = self.node(*first)?.value.rows();
        let mut cols = 0;
        for &p in parts {
            let pv = &self.node(p)?.value;
            if pv.rows() != rows {
                return Err(mismatch("concat_cols", (rows, cols), pv.shape()));
            }
            cols += pv.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks operands vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(AutodiffError::EmptyInput { op: "concat_rows" })?;
        let cols = self.node(*first)?.value.cols();
        let mut rows = 0;
        for &p in parts {
            let pv = &self.node(p)?.value;
            if pv.cols() != cols {
                return Err(mismatch("concat_rows", (rows, cols), pv.shape()));
            }
            rows += pv.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.node(x)?.value;
        if start + len > xv.cols() {
            return Err(AutodiffError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: xv.cols(),
            });
        }
        let mut data = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let out = Tensor::new(xv.rows(), len, data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    /// Numerically stable row-wise softmax (row max subtracted).
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = &self.node(a)?.value;
        if av.cols() == 0 {
            return Err(AutodiffError::EmptyInput { op: "softmax_rows" });
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let mut data = Vec::with_capacity(idx.len() * xv.cols());
        for &i in idx {
            if i >= xv.rows() {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    bound: xv.rows(),
                });
            }
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor::new(idx.len(), xv.cols(), data)?;
        let rg = self.rg(x);
        Ok(self.push(
            out,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// `adj * x` for a constant sparse `adj`.
    pub fn spmm(&mut self, adj: Arc<CsrMatrix<T>>, x: Var) -> Result<Var> {
        let xv = &self.node(x)?.value;
        if adj.cols() != xv.rows() {
            return Err(mismatch("spmm", (adj.rows(), adj.cols()), xv.shape()));
        }
        let c = xv.cols();
        let mut out = Tensor::zeros(adj.rows(), c);
        for r in 0..adj.rows() {
            let out_row = &mut out.data_mut()[r * c..(r + 1) * c];
            for (j, w) in adj.row_entries(r) {
                for (o, &v) in out_row.iter_mut().zip(xv.row(j)) {
                    *o += w * v;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::SpMM { adj, x }, rg))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `labels`,
    /// evaluated in the overflow-free logit form. `logits` is `n x 1`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let lv = &self.node(logits)?.value;
        if lv.cols() != 1 || lv.rows() != labels.len() {
            return Err(mismatch("bce_with_logits", lv.shape(), (labels.len(), 1)));
        }
        if labels.is_empty() {
            return Err(AutodiffError::EmptyInput { op: "bce_with_logits" });
        }
        let total: T = lv
            .data()
            .iter()
            .zip(labels)
            .map(|(&x, &y)| bce_logit_term(x, y))
            .sum();
        let loss = total / T::from_f64(labels.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Signs of every ReLU input on the tape. Finite-difference oracles use it
    /// to discard perturbations that cross a kink.
    pub fn relu_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) = n.op {
                sig.extend(self.nodes[a.0].value.data().iter().map(|&x| x > T::zero()));
            }
        }
        sig
    }

    /// Reverse pass from a `1 x 1` loss. A tape supports exactly one backward
    /// pass; a second call fails with [`AutodiffError::TapeConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(AutodiffError::TapeConsumed);
        }
        let lv = &self.node(loss)?.value;
        if lv.shape() != (1, 1) {
            return Err(AutodiffError::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if matches!(n.op, Op::Leaf) && n.requires_grad {
                    Some(grads[i].take().unwrap_or_else(|| Tensor::zeros(n.value.rows(), n.value.cols())))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients { leaves })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let nodes = &self.nodes;
        let want = |v: Var| nodes[v.0].requires_grad;
        macro_rules! acc {
            ($v:expr) => {
                slot(grads, nodes[$v.0].value.shape(), $v)
            };
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if want(*a) {
                    gemm_nt(g.data(), bv.data(), acc!(*a).data_mut(), m, n, k);
                }
                if want(*b) {
                    gemm_tn(av.data(), g.data(), acc!(*b).data_mut(), m, k, n);
                }
            }
            Op::Transpose(a) => {
                if want(*a) {
                    acc!(*a).add_assign(&g.transpose());
                }
            }
            Op::Add(a, b) => {
                if want(*a) {
                    acc!(*a).add_assign(g);
                }
                if want(*b) {
                    acc!(*b).add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    acc!(*a).add_assign(g);
                }
                if want(*b) {
                    for (o, &d) in acc!(*b).data_mut().iter_mut().zip(g.data()) {
                        *o -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if want(*a) {
                    let ga = acc!(*a).data_mut();
                    for ((o, &d), &y) in ga.iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += d * y;
                    }
                }
                if want(*b) {
                    let gb = acc!(*b).data_mut();
                    for ((o, &d), &x) in gb.iter_mut().zip(g.data()).zip(av.data()) {
                        *o += d * x;
                    }
                }
            }
            Op::Scale(a, s) => {
                if want(*a) {
                    for (o, &d) in acc!(*a).data_mut().iter_mut().zip(g.data()) {
                        *o += d * *s;
                    }
                }
            }
            Op::Relu(a) => {
                if want(*a) {
                    let xv = &nodes[a.0].value;
                    for ((o, &d), &x) in acc!(*a).data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if x > T::zero() {
                            *o += d;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if want(*a) {
                    let yv = &nodes[i].value;
                    for ((o, &d), &y) in acc!(*a).data_mut().iter_mut().zip(g.data()).zip(yv.data()) {
                        *o += d * y * (T::one() - y);
                    }
                }
            }
            Op::AddBias(x, b) => {
                if want(*x) {
                    acc!(*x).add_assign(g);
                }
                if want(*b) {
                    acc!(*b).add_assign(&column_sums(g));
                }
            }
            Op::MeanRows(a) => {
                if want(*a) {
                    let ga = acc!(*a);
                    let inv = T::one() / T::from_f64(ga.rows() as f64);
                    for r in 0..ga.rows() {
                        for (o, &d) in ga.row_mut(r).iter_mut().zip(g.data()) {
                            *o += d * inv;
                        }
                    }
                }
            }
            Op::SumRows(a) => {
                if want(*a) {
                    let ga = acc!(*a);
                    for r in 0..ga.rows() {
                        for (o, &d) in ga.row_mut(r).iter_mut().zip(g.data()) {
                            *o += d;
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if want(*a) {
                    let d = g.data()[0];
                    acc!(*a).data_mut().iter_mut().for_each(|o| *o += d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let pc = nodes[p.0].value.cols();
                    if want(*p) {
                        let gp = acc!(*p);
                        for r in 0..gp.rows() {
                            for (o, &d) in gp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + pc]) {
                                *o += d;
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for p in parts {
                    let n = nodes[p.0].value.len();
                    if want(*p) {
                        for (o, &d) in acc!(*p).data_mut().iter_mut().zip(&g.data()[offset..offset + n]) {
                            *o += d;
                        }
                    }
                    offset += n;
                }
                debug_assert_eq!(offset, g.rows() * cols);
            }
            Op::SliceCols { x, start } => {
                if want(*x) {
                    let gx = acc!(*x);
                    let len = g.cols();
                    for r in 0..g.rows() {
                        for (o, &d) in gx.row_mut(r)[*start..*start + len].iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if want(*a) {
                    let y = &nodes[i].value;
                    let ga = acc!(*a);
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: T = yr.iter().zip(gr).map(|(&p, &d)| p * d).sum();
                        for ((o, &p), &d) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o += p * (d - dot);
                        }
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                if want(*x) {
                    let gx = acc!(*x);
                    for (r, &src) in idx.iter().enumerate() {
                        for (o, &d) in gx.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                }
            }
            Op::SpMM { adj, x } => {
                if want(*x) {
                    let gx = acc!(*x);
                    for r in 0..adj.rows() {
                        let gr = g.row(r);
                        for (j, w) in adj.row_entries(r) {
                            for (o, &d) in gx.row_mut(j).iter_mut().zip(gr) {
                                *o += w * d;
                            }
                        }
                    }
                }
            }
            Op::BceWithLogits { logits, labels } => {
                if want(*logits) {
                    let lv = &nodes[logits.0].value;
                    let scale = g.data()[0] / T::from_f64(labels.len() as f64);
                    for ((o, &x), &y) in acc!(*logits).data_mut().iter_mut().zip(lv.data()).zip(labels) {
                        *o += (sigmoid(x) - y) * scale;
                    }
                }
            }
        }
    }
}

/// Leaf gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f32> {
    leaves: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a trainable leaf (zeros when the loss does not depend on
    /// it). `None` for constants and intermediate nodes.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.leaves.get_mut(v.0).and_then(Option::take)
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `-(y ln s(x) + (1-y) ln(1-s(x)))` without forming `s(x)`.
#[inline]
pub fn bce_logit_term<T: Scalar>(x: T, y: T) -> T {
    x.max(T::zero()) - x * y + (T::one() + (-x.abs()).exp()).ln()
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Tensor<T>>], shape: (usize, usize), v: Var) -> &mut Tensor<T> {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

fn column_sums<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(1, t.cols());
    for r in 0..t.rows() {
        for (o, &v) in out.data_mut().iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out
}
