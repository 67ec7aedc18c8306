//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records every operation as a node holding its output value.
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and [`Graph::backward`] walks it in reverse.
//!
//! Values are matrices: a rank-1 tensor of length `n` is treated as a `1 x n`
//! row. Binary elementwise operations broadcast an operand whose row or column
//! count is 1.

use std::borrow::Cow;
use std::collections::HashMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifier of a trainable tensor inside a parameter store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, b_transposed: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Sigmoid(Var),
    Tanh(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    GatherRows { table: Var, rows: Vec<usize> },
    Softmax { x: Var, lens: Option<Vec<usize>> },
    Scores { query: Var, keys: Vec<Var>, scale: f64 },
    WeightedSum { weights: Var, values: Vec<Var> },
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<f64>, probs: Vec<f64> },
    Sum(Var),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Parameter leaves borrow their tensors for `'p`.
#[derive(Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for each parameter that took part in the computation.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> + '_ {
        self.params
            .iter()
            .filter_map(|&(id, var)| self.wrt(var).map(|g| (id, g)))
    }

    pub fn into_param_map(mut self) -> HashMap<ParamId, Tensor> {
        let mut out = HashMap::new();
        for &(id, var) in &self.params {
            if let Some(g) = self.grads[var.0].take() {
                out.insert(id, g);
            }
        }
        out
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn broadcast_dims(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let (ra, ca) = dims(a);
    let (rb, cb) = dims(b);
    let rows = ra.max(rb);
    let cols = ca.max(cb);
    let ok = |r: usize, c: usize| (r == rows || r == 1) && (c == cols || c == 1);
    if ok(ra, ca) && ok(rb, cb) {
        Ok((rows, cols))
    } else {
        Err(Error::dim(op, a.shape(), b.shape()))
    }
}

fn result_shape(a: &Tensor, b: &Tensor, rows: usize, cols: usize) -> Vec<usize> {
    if dims(a) == (rows, cols) {
        a.shape().to_vec()
    } else if dims(b) == (rows, cols) {
        b.shape().to_vec()
    } else {
        vec![rows, cols]
    }
}

#[inline]
fn bidx(r: usize, c: usize, (rows, cols): (usize, usize)) -> usize {
    let r = if rows == 1 { 0 } else { r };
    let c = if cols == 1 { 0 } else { c };
    r * cols + c
}

fn broadcast_map(
    a: &Tensor,
    b: &Tensor,
    rows: usize,
    cols: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    if a.shape() == b.shape() {
        return a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    }
    let (da, db) = (dims(a), dims(b));
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(f(a.data()[bidx(r, c, da)], b.data()[bidx(r, c, db)]));
        }
    }
    out
}

/// Adds `g` (shape `rows x cols`) into `dst`, summing over broadcast axes.
fn reduce_into(dst: &mut [f64], target: (usize, usize), g: &[f64], rows: usize, cols: usize) {
    if target == (rows, cols) {
        for (d, v) in dst.iter_mut().zip(g) {
            *d += v;
        }
        return;
    }
    for r in 0..rows {
        for c in 0..cols {
            dst[bidx(r, c, target)] += g[r * cols + c];
        }
    }
}

/// `c = a * b + beta * c` with arbitrary strides on `a` and `b`; `c` is row-major `m x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices are at least as long as the strided extents above and
    // `c` does not alias `a` or `b` (it is uniquely borrowed).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, requires_grad)
    }

    /// A value that is not differentiated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// A free differentiable input that is not tied to a parameter store.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// Registers a trainable tensor. Repeated calls with the same id return
    /// the same node so that every use accumulates into one gradient.
    pub fn param(&mut self, id: ParamId, t: &'p Tensor) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(Cow::Borrowed(t), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    /// `a · b`, with `a: m x k` and `b: k x n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` where `b` is stored `n x k`; the usual `x Wᵀ` layer product.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, b_transposed: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims(ta);
        let (n, kb, bstride) = if b_transposed {
            let (n, kb) = dims(tb);
            (n, kb, (1, kb))
        } else {
            let (kb, n) = dims(tb);
            (n, kb, (n, 1))
        };
        if k != kb {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), (k, 1), tb.data(), bstride, 0.0, &mut out);
        Ok(self.op(
            Tensor::matrix(m, n, out),
            Op::MatMul { a, b, b_transposed },
            &[a, b],
        ))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (rows, cols) = broadcast_dims(name, ta, tb)?;
        let shape = result_shape(ta, tb, rows, cols);
        let data = broadcast_map(ta, tb, rows, cols, f);
        let value = Tensor::new(shape, data)?;
        Ok(self.op(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| scale * v + shift)
            .collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.op(value, Op::Affine { x, scale }, &[x])
    }

    /// `1 - x`, exact at `x ∈ {0, 1}`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.op(value, op, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = dims(t);
        if len == 0 || start + len > cols {
            return Err(Error::Index {
                what: "slice_cols",
                index: start + len,
                len: cols,
            });
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        Ok(self.op(Tensor::matrix(rows, len, data), Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::dim("concat_cols", self.value(*first).shape(), t.shape()));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.op(
            Tensor::matrix(rows, cols, data),
            Op::ConcatCols(parts.to_vec()),
            parts,
        ))
    }

    /// Selects rows of `table` by index; an embedding lookup when `table` is `V x d`.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (n, cols) = dims(t);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= n {
                return Err(Error::Index {
                    what: "gather_rows",
                    index: r,
                    len: n,
                });
            }
            data.extend_from_slice(t.row(r));
        }
        if rows.is_empty() {
            return Err(Error::Contract("gather_rows with no indices".into()));
        }
        Ok(self.op(
            Tensor::matrix(rows.len(), cols, data),
            Op::GatherRows {
                table,
                rows: rows.to_vec(),
            },
            &[table],
        ))
    }

    /// Row-wise softmax. With `lens`, row `r` only spans its first `lens[r]`
    /// columns and the remainder is exactly zero.
    pub fn softmax_rows(&mut self, x: Var, lens: Option<&[usize]>) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = dims(t);
        if let Some(lens) = lens {
            if lens.len() != rows {
                return Err(Error::dim("softmax_rows", t.shape(), &[lens.len()]));
            }
            if let Some(&bad) = lens.iter().find(|&&l| l == 0 || l > cols) {
                return Err(Error::Domain(format!(
                    "softmax row length {bad} outside 1..={cols}"
                )));
            }
        }
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let len = lens.map_or(cols, |l| l[r]);
            softmax_row(&t.row(r)[..len], &mut out[r * cols..r * cols + len]);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.op(
            value,
            Op::Softmax {
                x,
                lens: lens.map(<[usize]>::to_vec),
            },
            &[x],
        ))
    }

    /// Scaled dot products `scale · ⟨query_r, key_j[r]⟩` arranged as `rows x keys`.
    /// A key with a single row is shared by every query row.
    pub fn scores(&mut self, query: Var, keys: &[Var], scale: f64) -> Result<Var> {
        let q = self.value(query);
        let (rows, d) = dims(q);
        let n = keys.len();
        if n == 0 {
            return Err(Error::Contract("attention over zero keys".into()));
        }
        let mut out = vec![0.0; rows * n];
        for (j, &k) in keys.iter().enumerate() {
            let kt = self.value(k);
            let (kr, kc) = dims(kt);
            if kc != d || (kr != rows && kr != 1) {
                return Err(Error::dim("scores", q.shape(), kt.shape()));
            }
            for r in 0..rows {
                let kr_row = kt.row(if kr == 1 { 0 } else { r });
                let dot: f64 = q.row(r).iter().zip(kr_row).map(|(a, b)| a * b).sum();
                out[r * n + j] = scale * dot;
            }
        }
        let mut inputs = vec![query];
        inputs.extend_from_slice(keys);
        Ok(self.op(
            Tensor::matrix(rows, n, out),
            Op::Scores {
                query,
                keys: keys.to_vec(),
                scale,
            },
            &inputs,
        ))
    }

    /// `Σ_j weights[r, j] · values_j[r]` for each row `r`.
    pub fn weighted_sum(&mut self, weights: Var, values: &[Var]) -> Result<Var> {
        let w = self.value(weights);
        let (rows, n) = dims(w);
        if n != values.len() || n == 0 {
            return Err(Error::dim("weighted_sum", w.shape(), &[values.len()]));
        }
        let d = self.value(values[0]).cols();
        let mut out = vec![0.0; rows * d];
        for (j, &v) in values.iter().enumerate() {
            let vt = self.value(v);
            let (vr, vc) = dims(vt);
            if vc != d || (vr != rows && vr != 1) {
                return Err(Error::dim("weighted_sum", w.shape(), vt.shape()));
            }
            for r in 0..rows {
                let a = w.data()[r * n + j];
                if a == 0.0 {
                    continue;
                }
                let src = vt.row(if vr == 1 { 0 } else { r });
                for (o, s) in out[r * d..(r + 1) * d].iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        let mut inputs = vec![weights];
        inputs.extend_from_slice(values);
        Ok(self.op(
            Tensor::matrix(rows, d, out),
            Op::WeightedSum {
                weights,
                values: values.to_vec(),
            },
            &inputs,
        ))
    }

    /// `Σ_r weights[r] · (−log softmax(logits_r)[targets[r]])` as a `1 x 1` value.
    /// Rows with zero weight are skipped entirely.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        let (rows, v) = dims(t);
        if targets.len() != rows || weights.len() != rows {
            return Err(Error::dim("cross_entropy", t.shape(), &[targets.len()]));
        }
        let mut probs = vec![0.0; rows * v];
        let mut total = 0.0;
        for r in 0..rows {
            let target = targets[r];
            if target >= v {
                return Err(Error::Index {
                    what: "cross_entropy target",
                    index: target,
                    len: v,
                });
            }
            if weights[r] == 0.0 {
                continue;
            }
            let row = t.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            let log_z = max + sum.ln();
            total += weights[r] * (log_z - row[target]);
            for (p, &z) in probs[r * v..(r + 1) * v].iter_mut().zip(row) {
                *p = (z - log_z).exp();
            }
        }
        Ok(self.op(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.op(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
        }

        let mut params: Vec<(ParamId, Var)> = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        params.sort();
        Ok(Gradients { grads, params })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut Tensor {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()))
    }

    fn backprop(&self, node: &Node<'p>, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, b_transposed } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = dims(ta);
                let n = g.cols();
                if self.wants(*a) {
                    // dA = G · Bᵀ (or G · B when B was used transposed)
                    let bs = if *b_transposed { (k, 1) } else { (1, n) };
                    let dst = self.slot(grads, *a);
                    gemm(m, n, k, gd, (n, 1), tb.data(), bs, 1.0, dst.data_mut());
                }
                if self.wants(*b) {
                    let dst = self.slot(grads, *b);
                    if *b_transposed {
                        // dB (n x k) = Gᵀ · A
                        gemm(n, m, k, gd, (1, n), ta.data(), (k, 1), 1.0, dst.data_mut());
                    } else {
                        // dB (k x n) = Aᵀ · G
                        gemm(k, m, n, ta.data(), (1, k), gd, (n, 1), 1.0, dst.data_mut());
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let (rows, cols) = dims(g);
                if self.wants(*a) {
                    let target = dims(self.value(*a));
                    reduce_into(self.slot(grads, *a).data_mut(), target, gd, rows, cols);
                }
                if self.wants(*b) {
                    let target = dims(self.value(*b));
                    if sign < 0.0 {
                        let neg: Vec<f64> = gd.iter().map(|v| -v).collect();
                        reduce_into(self.slot(grads, *b).data_mut(), target, &neg, rows, cols);
                    } else {
                        reduce_into(self.slot(grads, *b).data_mut(), target, gd, rows, cols);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (rows, cols) = dims(g);
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let local = broadcast_map(g, tb, rows, cols, |x, y| x * y);
                    let target = dims(ta);
                    reduce_into(self.slot(grads, *a).data_mut(), target, &local, rows, cols);
                }
                if self.wants(*b) {
                    let local = broadcast_map(g, ta, rows, cols, |x, y| x * y);
                    let target = dims(tb);
                    reduce_into(self.slot(grads, *b).data_mut(), target, &local, rows, cols);
                }
            }
            Op::Affine { x, scale } => {
                if self.wants(*x) {
                    for (d, v) in self.slot(grads, *x).data_mut().iter_mut().zip(gd) {
                        *d += scale * v;
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.wants(*x) {
                    let y = node.value.data();
                    let dst = self.slot(grads, *x).data_mut();
                    for ((d, &gv), &yv) in dst.iter_mut().zip(gd).zip(y) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Tanh(x) => {
                if self.wants(*x) {
                    let y = node.value.data();
                    let dst = self.slot(grads, *x).data_mut();
                    for ((d, &gv), &yv) in dst.iter_mut().zip(gd).zip(y) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::SliceCols { x, start } => {
                if self.wants(*x) {
                    let (rows, len) = dims(g);
                    let dst = self.slot(grads, *x);
                    let cols = dst.cols();
                    let dd = dst.data_mut();
                    for r in 0..rows {
                        for c in 0..len {
                            dd[r * cols + start + c] += gd[r * len + c];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, cols) = dims(g);
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.wants(p) {
                        let dd = self.slot(grads, p).data_mut();
                        for r in 0..rows {
                            for c in 0..pc {
                                dd[r * pc + c] += gd[r * cols + offset + c];
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::GatherRows { table, rows } => {
                if self.wants(*table) {
                    let cols = g.cols();
                    let dd = self.slot(grads, *table).data_mut();
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            dd[r * cols + c] += gd[i * cols + c];
                        }
                    }
                }
            }
            Op::Softmax { x, lens } => {
                if self.wants(*x) {
                    let (rows, cols) = dims(g);
                    let y = node.value.data();
                    let dd = self.slot(grads, *x).data_mut();
                    for r in 0..rows {
                        let len = lens.as_ref().map_or(cols, |l| l[r]);
                        let base = r * cols;
                        let dot: f64 = (0..len).map(|j| gd[base + j] * y[base + j]).sum();
                        for j in 0..len {
                            dd[base + j] += y[base + j] * (gd[base + j] - dot);
                        }
                    }
                }
            }
            Op::Scores { query, keys, scale } => {
                let q = self.value(*query);
                let (rows, d) = dims(q);
                let n = keys.len();
                if self.wants(*query) {
                    let mut local = vec![0.0; rows * d];
                    for (j, &k) in keys.iter().enumerate() {
                        let kt = self.value(k);
                        let shared = kt.rows() == 1;
                        for r in 0..rows {
                            let w = scale * gd[r * n + j];
                            let krow = kt.row(if shared { 0 } else { r });
                            for (o, kv) in local[r * d..(r + 1) * d].iter_mut().zip(krow) {
                                *o += w * kv;
                            }
                        }
                    }
                    for (dst, v) in self.slot(grads, *query).data_mut().iter_mut().zip(&local) {
                        *dst += v;
                    }
                }
                for (j, &k) in keys.iter().enumerate() {
                    if !self.wants(k) {
                        continue;
                    }
                    let shared = self.value(k).rows() == 1;
                    let dd = self.slot(grads, k).data_mut();
                    for r in 0..rows {
                        let w = scale * gd[r * n + j];
                        let off = if shared { 0 } else { r * d };
                        for (o, qv) in dd[off..off + d].iter_mut().zip(q.row(r)) {
                            *o += w * qv;
                        }
                    }
                }
            }
            Op::WeightedSum { weights, values } => {
                let w = self.value(*weights);
                let (rows, n) = dims(w);
                let d = g.cols();
                if self.wants(*weights) {
                    let mut local = vec![0.0; rows * n];
                    for (j, &v) in values.iter().enumerate() {
                        let vt = self.value(v);
                        let shared = vt.rows() == 1;
                        for r in 0..rows {
                            let vrow = vt.row(if shared { 0 } else { r });
                            local[r * n + j] =
                                gd[r * d..(r + 1) * d].iter().zip(vrow).map(|(a, b)| a * b).sum();
                        }
                    }
                    for (dst, v) in self.slot(grads, *weights).data_mut().iter_mut().zip(&local) {
                        *dst += v;
                    }
                }
                for (j, &v) in values.iter().enumerate() {
                    if !self.wants(v) {
                        continue;
                    }
                    let shared = self.value(v).rows() == 1;
                    let dd = self.slot(grads, v).data_mut();
                    for r in 0..rows {
                        let a = w.data()[r * n + j];
                        let off = if shared { 0 } else { r * d };
                        for (o, gv) in dd[off..off + d].iter_mut().zip(&gd[r * d..(r + 1) * d]) {
                            *o += a * gv;
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                if self.wants(*logits) {
                    let scale = gd[0];
                    let v = self.value(*logits).cols();
                    let dd = self.slot(grads, *logits).data_mut();
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let base = r * v;
                        for c in 0..v {
                            dd[base + c] += scale * w * probs[base + c];
                        }
                        dd[base + t] -= scale * w;
                    }
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let s = gd[0];
                    for d in self.slot(grads, *x).data_mut() {
                        *d += s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_fn(f: impl Fn(&mut Graph, Var) -> Var, x: f64) -> (f64, f64) {
        let mut g = Graph::new();
        let v = g.input(Tensor::scalar(x));
        let y = f(&mut g, v);
        let grads = g.backward(y).unwrap();
        (g.value(y).item(), grads.wrt(v).unwrap().item())
    }

    #[test]
    fn square_gradient() {
        let (y, dy) = scalar_fn(|g, x| g.mul(x, x).unwrap(), 3.0);
        assert_eq!(y, 9.0);
        assert_eq!(dy, 6.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let (y, dy) = scalar_fn(|g, x| g.sigmoid(x), 0.0);
        assert_eq!(y, 0.5);
        assert_eq!(dy, 0.25);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let v = g.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(v), Err(Error::Contract(_))));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        match err {
            Error::Dimension { left, right, .. } => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn broadcast_column_times_matrix() {
        let mut g = Graph::new();
        let col = g.input(Tensor::column(vec![2.0, 3.0]));
        let m = g.input(Tensor::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap());
        let p = g.mul(col, m).unwrap();
        assert_eq!(g.value(p).data(), &[2.0, 2.0, 3.0, 6.0]);
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(col).unwrap().data(), &[2.0, 3.0]);
        assert_eq!(grads.wrt(m).unwrap().data(), &[2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn masked_softmax_zeroes_tail() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 9.0]]).unwrap());
        let y = g.softmax_rows(x, Some(&[3, 2])).unwrap();
        let v = g.value(y);
        assert_eq!(v.get(1, 2), 0.0);
        assert!((v.get(1, 0) - 0.5).abs() < 1e-15);
        let total: f64 = v.row(0).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gather_out_of_range() {
        let mut g = Graph::new();
        let t = g.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(g.gather_rows(t, &[3]), Err(Error::Index { .. })));
    }
}
