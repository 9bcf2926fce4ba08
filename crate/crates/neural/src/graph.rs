//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Graph`] records every operation as a node that owns its forward
//! value. Parameters are referenced from a borrowed [`ParamStore`] rather
//! than copied, and their gradients are returned as [`Gradients`] so the
//! caller decides when to fold them into the store.

use crate::{Gradients, NeuralError, ParamId, ParamStore, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulT(NodeId, NodeId),
    /// Same shape, or `b` a single row broadcast over `a`'s rows.
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Gather(NodeId, Vec<usize>),
    GatherMean(NodeId, Vec<Vec<usize>>),
    MeanRows(NodeId),
    Row(NodeId, usize),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Transpose(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    Pick(NodeId, Vec<(usize, usize)>),
    Sum(NodeId),
    Mean(NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Option<Tensor>,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
}

fn shape_err(msg: String) -> NeuralError {
    NeuralError::Shape(msg)
}

// c[n×m] += a[n×k] · b[k×m]
fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let crow = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
}

// c[n×m] += a[n×k] · b[m×k]ᵀ
fn matmul_t_into(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            c[i * m + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

// c[k×m] += a[n×k]ᵀ · b[n×m]
fn t_matmul_into(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let crow = &mut c[p * m..(p + 1) * m];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Numerically stable `ln Σ exp(x)`.
pub fn logsumexp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Stable log-softmax of one row.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let lse = logsumexp(x);
    x.iter().map(|v| v - lse).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(pid) => self.store.get(pid),
            _ => node.value.as_ref().expect("non-param node has a value"),
        }
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let t = self.value(id);
        (t.rows(), t.cols())
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value: Some(value) });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, t)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node { op: Op::Param(id), value: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 {
            return Err(shape_err(format!("matmul {n}x{k} by {k2}x{m}")));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(n, m, out)))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.dims(a);
        let (m, k2) = self.dims(b);
        if k != k2 {
            return Err(shape_err(format!("matmul_t {n}x{k} by ({m}x{k2})^T")));
        }
        let mut out = vec![0.0; n * m];
        matmul_t_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        Ok(self.push(Op::MatMulT(a, b), Tensor::matrix(n, m, out)))
    }

    fn check_broadcast(&self, a: NodeId, b: NodeId, what: &str) -> Result<(usize, usize, bool)> {
        let (n, m) = self.dims(a);
        let (bn, bm) = self.dims(b);
        if bm != m || (bn != n && bn != 1) {
            return Err(shape_err(format!("{what} {n}x{m} with {bn}x{bm}")));
        }
        Ok((n, m, bn == 1 && n != 1))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m, bcast) = self.check_broadcast(a, b, "add")?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let out = (0..n * m)
            .map(|i| av[i] + if bcast { bv[i % m] } else { bv[i] })
            .collect();
        Ok(self.push(Op::Add(a, b), Tensor::matrix(n, m, out)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m, bcast) = self.check_broadcast(a, b, "sub")?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let out = (0..n * m)
            .map(|i| av[i] - if bcast { bv[i % m] } else { bv[i] })
            .collect();
        Ok(self.push(Op::Sub(a, b), Tensor::matrix(n, m, out)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m, bcast) = self.check_broadcast(a, b, "mul")?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let out = (0..n * m)
            .map(|i| av[i] * if bcast { bv[i % m] } else { bv[i] })
            .collect();
        Ok(self.push(Op::Mul(a, b), Tensor::matrix(n, m, out)))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let (n, m) = self.dims(a);
        let out = self.value(a).data().iter().map(|v| v * s).collect();
        self.push(Op::Scale(a, s), Tensor::matrix(n, m, out))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let (n, m) = self.dims(a);
        let out = self.value(a).data().iter().map(|v| v + c).collect();
        self.push(Op::AddConst(a), Tensor::matrix(n, m, out))
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let (n, m) = self.dims(a);
        let out = self.value(a).data().iter().map(|&v| f(v)).collect();
        self.push(op, Tensor::matrix(n, m, out))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |v| v.max(0.0))
    }

    /// Rows of `table` selected by `indices`, in order.
    pub fn gather(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (n, m) = self.dims(table);
        let tv = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * m);
        for &ix in indices {
            if ix >= n {
                return Err(NeuralError::IndexOutOfRange { index: ix, size: n });
            }
            out.extend_from_slice(tv.row_slice(ix));
        }
        Ok(self.push(Op::Gather(table, indices.to_vec()), Tensor::matrix(indices.len(), m, out)))
    }

    /// One output row per group: the mean of the gathered `table` rows.
    pub fn gather_mean(&mut self, table: NodeId, groups: &[Vec<usize>]) -> Result<NodeId> {
        let (n, m) = self.dims(table);
        let tv = self.value(table);
        let mut out = vec![0.0; groups.len() * m];
        for (g, ixs) in groups.iter().enumerate() {
            if ixs.is_empty() {
                return Err(shape_err("gather_mean over an empty group".into()));
            }
            let inv = 1.0 / ixs.len() as f64;
            let orow = &mut out[g * m..(g + 1) * m];
            // Summing in index order makes the mean exactly order invariant.
            let mut sorted = ixs.clone();
            sorted.sort_unstable();
            for &ix in &sorted {
                if ix >= n {
                    return Err(NeuralError::IndexOutOfRange { index: ix, size: n });
                }
                for (o, v) in orow.iter_mut().zip(tv.row_slice(ix)) {
                    *o += v * inv;
                }
            }
        }
        Ok(self.push(Op::GatherMean(table, groups.to_vec()), Tensor::matrix(groups.len(), m, out)))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let (n, m) = self.dims(a);
        let av = self.value(a).data();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                out[j] += av[i * m + j] / n as f64;
            }
        }
        self.push(Op::MeanRows(a), Tensor::matrix(1, m, out))
    }

    pub fn row(&mut self, a: NodeId, r: usize) -> Result<NodeId> {
        let (n, _) = self.dims(a);
        if r >= n {
            return Err(NeuralError::IndexOutOfRange { index: r, size: n });
        }
        let out = self.value(a).row_slice(r).to_vec();
        Ok(self.push(Op::Row(a, r), Tensor::row(out)))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (n, m) = self.dims(a);
        if start + len > m {
            return Err(shape_err(format!("slice_cols {start}+{len} of {m} columns")));
        }
        let av = self.value(a).data();
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&av[i * m + start..i * m + start + len]);
        }
        Ok(self.push(Op::SliceCols(a, start, len), Tensor::matrix(n, len, out)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let n = self.dims(parts[0]).0;
        let mut total = 0;
        for &p in parts {
            let (pn, pm) = self.dims(p);
            if pn != n {
                return Err(shape_err(format!("concat_cols rows {pn} vs {n}")));
            }
            total += pm;
        }
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), Tensor::matrix(n, total, out)))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let m = self.dims(parts[0]).1;
        let mut out = Vec::new();
        let mut n = 0;
        for &p in parts {
            let (pn, pm) = self.dims(p);
            if pm != m {
                return Err(shape_err(format!("concat_rows cols {pm} vs {m}")));
            }
            out.extend_from_slice(self.value(p).data());
            n += pn;
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), Tensor::matrix(n, m, out)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (n, m) = self.dims(a);
        let av = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = av[i * m + j];
            }
        }
        self.push(Op::Transpose(a), Tensor::matrix(m, n, out))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (n, m) = self.dims(a);
        let av = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            softmax_row(&av[i * m..(i + 1) * m], &mut out[i * m..(i + 1) * m]);
        }
        self.push(Op::SoftmaxRows(a), Tensor::matrix(n, m, out))
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (n, m) = self.dims(a);
        let av = self.value(a).data();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            out.extend(log_softmax(&av[i * m..(i + 1) * m]));
        }
        self.push(Op::LogSoftmaxRows(a), Tensor::matrix(n, m, out))
    }

    /// Selected `(row, col)` entries as a single row.
    pub fn pick(&mut self, a: NodeId, at: &[(usize, usize)]) -> Result<NodeId> {
        let (n, m) = self.dims(a);
        let av = self.value(a);
        let mut out = Vec::with_capacity(at.len());
        for &(r, c) in at {
            if r >= n || c >= m {
                return Err(NeuralError::IndexOutOfRange { index: r * m + c, size: n * m });
            }
            out.push(av.get(r, c));
        }
        Ok(self.push(Op::Pick(a, at.to_vec()), Tensor::row(out)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).data();
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(NeuralError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = node.value.as_ref();
            match &node.op {
                Op::Input => {}
                Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.dims(*a);
                    let m = self.dims(*b).1;
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    matmul_t_into(&g, bv, acc(&mut grads, *a, n * k), n, m, k);
                    t_matmul_into(av, &g, acc(&mut grads, *b, k * m), n, k, m);
                }
                Op::MatMulT(a, b) => {
                    let (n, k) = self.dims(*a);
                    let m = self.dims(*b).0;
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    matmul_into(&g, bv, acc(&mut grads, *a, n * k), n, m, k);
                    t_matmul_into(&g, av, acc(&mut grads, *b, m * k), n, m, k);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (n, m) = self.dims(*a);
                    let bn = self.dims(*b).0;
                    acc(&mut grads, *a, n * m).iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    let gb = acc(&mut grads, *b, bn * m);
                    if bn == n {
                        gb.iter_mut().zip(&g).for_each(|(x, y)| *x += sign * y);
                    } else {
                        for (i, y) in g.iter().enumerate() {
                            gb[i % m] += sign * y;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (n, m) = self.dims(*a);
                    let bn = self.dims(*b).0;
                    let bcast = bn != n;
                    let (av, bv) = (self.value(*a).data().to_vec(), self.value(*b).data().to_vec());
                    {
                        let ga = acc(&mut grads, *a, n * m);
                        for i in 0..n * m {
                            ga[i] += g[i] * if bcast { bv[i % m] } else { bv[i] };
                        }
                    }
                    let gb = acc(&mut grads, *b, bn * m);
                    for i in 0..n * m {
                        let j = if bcast { i % m } else { i };
                        gb[j] += g[i] * av[i];
                    }
                }
                Op::Scale(a, s) => {
                    let len = g.len();
                    acc(&mut grads, *a, len).iter_mut().zip(&g).for_each(|(x, y)| *x += s * y);
                }
                Op::AddConst(a) => {
                    let len = g.len();
                    acc(&mut grads, *a, len).iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                }
                Op::Tanh(a) => {
                    let o = out.unwrap().data();
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - o[i] * o[i]);
                    }
                }
                Op::Sigmoid(a) => {
                    let o = out.unwrap().data();
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * o[i] * (1.0 - o[i]);
                    }
                }
                Op::Relu(a) => {
                    let o = out.unwrap().data();
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        if o[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                }
                Op::Gather(t, ixs) => {
                    let (n, m) = self.dims(*t);
                    let gt = acc(&mut grads, *t, n * m);
                    for (r, &ix) in ixs.iter().enumerate() {
                        for j in 0..m {
                            gt[ix * m + j] += g[r * m + j];
                        }
                    }
                }
                Op::GatherMean(t, groups) => {
                    let (n, m) = self.dims(*t);
                    let gt = acc(&mut grads, *t, n * m);
                    for (r, ixs) in groups.iter().enumerate() {
                        let inv = 1.0 / ixs.len() as f64;
                        for &ix in ixs {
                            for j in 0..m {
                                gt[ix * m + j] += g[r * m + j] * inv;
                            }
                        }
                    }
                }
                Op::MeanRows(a) => {
                    let (n, m) = self.dims(*a);
                    let ga = acc(&mut grads, *a, n * m);
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += g[j] / n as f64;
                        }
                    }
                }
                Op::Row(a, r) => {
                    let (n, m) = self.dims(*a);
                    let ga = acc(&mut grads, *a, n * m);
                    for j in 0..m {
                        ga[r * m + j] += g[j];
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let (n, m) = self.dims(*a);
                    let ga = acc(&mut grads, *a, n * m);
                    for i in 0..n {
                        for j in 0..*len {
                            ga[i * m + start + j] += g[i * len + j];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let n = out.unwrap().rows();
                    let total = out.unwrap().cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pm = self.dims(p).1;
                        let gp = acc(&mut grads, p, n * pm);
                        for i in 0..n {
                            for j in 0..pm {
                                gp[i * pm + j] += g[i * total + offset + j];
                            }
                        }
                        offset += pm;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let gp = acc(&mut grads, p, len);
                        for j in 0..len {
                            gp[j] += g[offset + j];
                        }
                        offset += len;
                    }
                }
                Op::Transpose(a) => {
                    let (n, m) = self.dims(*a);
                    let ga = acc(&mut grads, *a, n * m);
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += g[j * n + i];
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let o = out.unwrap();
                    let (n, m) = (o.rows(), o.cols());
                    let o = o.data();
                    let ga = acc(&mut grads, *a, n * m);
                    for i in 0..n {
                        let row = i * m..(i + 1) * m;
                        let dot: f64 = o[row.clone()].iter().zip(&g[row.clone()]).map(|(p, q)| p * q).sum();
                        for j in row {
                            ga[j] += o[j] * (g[j] - dot);
                        }
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    let o = out.unwrap();
                    let (n, m) = (o.rows(), o.cols());
                    let o = o.data();
                    let ga = acc(&mut grads, *a, n * m);
                    for i in 0..n {
                        let row = i * m..(i + 1) * m;
                        let gsum: f64 = g[row.clone()].iter().sum();
                        for j in row {
                            ga[j] += g[j] - o[j].exp() * gsum;
                        }
                    }
                }
                Op::Pick(a, at) => {
                    let (n, m) = self.dims(*a);
                    let ga = acc(&mut grads, *a, n * m);
                    for (k, &(r, c)) in at.iter().enumerate() {
                        ga[r * m + c] += g[k];
                    }
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    acc(&mut grads, *a, len).iter_mut().for_each(|x| *x += g[0]);
                }
                Op::Mean(a) => {
                    let len = self.value(*a).len();
                    let share = g[0] / len as f64;
                    acc(&mut grads, *a, len).iter_mut().for_each(|x| *x += share);
                }
            }
        }

        let mut per_param: Vec<Option<Vec<f64>>> = vec![None; self.store.len()];
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(pid), Some(g)) = (&node.op, grads[idx].take()) {
                match &mut per_param[pid.0] {
                    Some(existing) => existing.iter_mut().zip(&g).for_each(|(x, y)| *x += y),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { per_param })
    }
}
