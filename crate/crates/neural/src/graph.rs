//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! A [`Graph`] records every operation in the order it is executed, so the
//! node list is already topologically sorted. [`Graph::backward`] walks it in
//! exact reverse order and accumulates gradients additively wherever a value
//! fans out to several consumers.
//!
//! ```
//! use taskdisc_neural::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.variable(Tensor::row_vector(vec![1.0, 2.0]).unwrap());
//! let w = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
//! let y = g.matmul(x, w).unwrap();
//! let loss = g.sum(y);
//! let grads = g.backward(loss);
//! assert_eq!(g.value(loss).item(), 11.0);
//! assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
//! ```

use std::ops::Range;

use crate::error::{shape_err, Result};
use crate::tensor::{matmul_acc, softmax_into, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<Range<usize>>),
    SelectRows {
        keep: Var,
        update: Var,
        mask: Vec<bool>,
    },
    Softmax(Var),
    SoftmaxXent {
        logits: Var,
        probs: Tensor,
        targets: Tensor,
    },
    Attend {
        query: Var,
        keys: Var,
        values: Var,
        segments: Vec<Range<usize>>,
        weights: Vec<f32>,
    },
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation record for one forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that required one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Graph {
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{n}x{k} times {k2}x{m}")));
        }
        let mut out = vec![0.0; n * m];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a `1 x m` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, m) = self.dims(x);
        if self.dims(bias) != (1, m) {
            return Err(shape_err(
                "add_bias",
                format!("{n}x{m} plus bias {:?}", self.dims(bias)),
            ));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..n {
            for (o, bv) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    /// `x * w + b`, the standard affine layer.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f32, f32) -> f32, op: Op) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return Err(shape_err(op_name, format!("{:?} vs {:?}", self.dims(a), self.dims(b))));
        }
        let (n, m) = self.dims(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::matrix(n, m, data)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = f(*v));
        let rg = self.any_grad(&[x]);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        self.map(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f32) -> Var {
        self.map(x, |v| v + s, Op::AddScalar(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f32::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_cols", "no inputs"));
        };
        let n = self.dims(*first).0;
        if parts.iter().any(|p| self.dims(*p).0 != n) {
            return Err(shape_err("concat_cols", "row counts differ"));
        }
        let widths: Vec<usize> = parts.iter().map(|p| self.dims(*p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(i));
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::matrix(n, total, out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_rows", "no inputs"));
        };
        let m = self.dims(*first).1;
        if parts.iter().any(|p| self.dims(*p).1 != m) {
            return Err(shape_err("concat_rows", "column counts differ"));
        }
        let mut out = Vec::new();
        let mut n = 0;
        for p in parts {
            out.extend_from_slice(self.value(*p).data());
            n += self.dims(*p).0;
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, cols: Range<usize>) -> Result<Var> {
        let (n, m) = self.dims(x);
        if cols.start >= cols.end || cols.end > m {
            return Err(shape_err("slice_cols", format!("{cols:?} of {m} columns")));
        }
        let w = cols.len();
        let mut out = Vec::with_capacity(n * w);
        for i in 0..n {
            out.extend_from_slice(&self.value(x).row(i)[cols.clone()]);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::matrix(n, w, out)?, Op::SliceCols(x, cols.start), rg))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`. Doubles as the
    /// embedding operation.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, m) = self.dims(table);
        if ids.is_empty() {
            return Err(shape_err("gather_rows", "no ids"));
        }
        let mut out = Vec::with_capacity(ids.len() * m);
        for &id in ids {
            if id >= rows {
                return Err(crate::NeuralError::UnknownTokenId { id, rows });
            }
            out.extend_from_slice(self.value(table).row(id));
        }
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            Tensor::matrix(ids.len(), m, out)?,
            Op::GatherRows(table, ids.to_vec()),
            rg,
        ))
    }

    /// Embedding lookup: one row of `table` per id.
    pub fn embed(&mut self, ids: &[usize], table: Var) -> Result<Var> {
        self.gather_rows(table, ids)
    }

    /// Mean of each row range of `x`; one output row per segment.
    pub fn segment_mean(&mut self, x: Var, segments: &[Range<usize>]) -> Result<Var> {
        let (n, m) = self.dims(x);
        if segments.is_empty() || segments.iter().any(|s| s.is_empty() || s.end > n) {
            return Err(shape_err("segment_mean", "empty or out-of-range segment"));
        }
        let mut out = vec![0.0; segments.len() * m];
        for (i, seg) in segments.iter().enumerate() {
            let o = &mut out[i * m..(i + 1) * m];
            for r in seg.clone() {
                for (ov, xv) in o.iter_mut().zip(self.value(x).row(r)) {
                    *ov += xv;
                }
            }
            let inv = 1.0 / seg.len() as f32;
            o.iter_mut().for_each(|v| *v *= inv);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor::matrix(segments.len(), m, out)?,
            Op::SegmentMean(x, segments.to_vec()),
            rg,
        ))
    }

    /// Row `i` of the output is `update[i]` where `mask[i]`, else `keep[i]`.
    pub fn select_rows(&mut self, keep: Var, update: Var, mask: &[bool]) -> Result<Var> {
        if self.dims(keep) != self.dims(update) || mask.len() != self.dims(keep).0 {
            return Err(shape_err("select_rows", "operands or mask disagree"));
        }
        let mut out = self.value(keep).clone();
        for (i, m) in mask.iter().enumerate() {
            if *m {
                out.row_mut(i).copy_from_slice(self.value(update).row(i));
            }
        }
        let rg = self.any_grad(&[keep, update]);
        Ok(self.push(
            out,
            Op::SelectRows {
                keep,
                update,
                mask: mask.to_vec(),
            },
            rg,
        ))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut out = src.clone();
        for i in 0..src.rows() {
            softmax_into(src.row(i), out.row_mut(i));
        }
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Softmax(x), rg)
    }

    /// Mean over rows of `-sum_j t_ij log softmax(logits)_ij`. Each target row
    /// is a probability distribution.
    pub fn softmax_xent(&mut self, logits: Var, targets: Tensor) -> Result<Var> {
        let (n, m) = self.dims(logits);
        if (targets.rows(), targets.cols()) != (n, m) {
            return Err(shape_err(
                "softmax_xent",
                format!("logits {n}x{m}, targets {}x{}", targets.rows(), targets.cols()),
            ));
        }
        let src = self.value(logits);
        let mut probs = src.clone();
        let mut loss = 0.0f32;
        for i in 0..n {
            let row = src.row(i);
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f32>().ln();
            for (j, t) in targets.row(i).iter().enumerate() {
                if *t != 0.0 {
                    loss -= t * (row[j] - lse);
                }
            }
            softmax_into(row, probs.row_mut(i));
        }
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / n as f32),
            Op::SoftmaxXent { logits, probs, targets },
            rg,
        ))
    }

    /// Segmented dot-product attention. For example `i`, the rows
    /// `segments[i]` of `keys` are scored against `query[i]`, the scores are
    /// softmax-normalised within the segment, and the output row is the
    /// weighted sum of the matching `values` rows.
    pub fn attend(&mut self, query: Var, keys: Var, values: Var, segments: &[Range<usize>]) -> Result<Var> {
        let (n, dk) = self.dims(query);
        let (rk, dk2) = self.dims(keys);
        let (rv, dv) = self.dims(values);
        if dk != dk2 || rk != rv || segments.len() != n {
            return Err(shape_err(
                "attend",
                format!(
                    "query {n}x{dk}, keys {rk}x{dk2}, values {rv}x{dv}, {} segments",
                    segments.len()
                ),
            ));
        }
        if segments.iter().any(|s| s.is_empty() || s.end > rk) {
            return Err(shape_err("attend", "empty or out-of-range segment"));
        }
        let mut weights = vec![0.0; rk];
        let mut out = vec![0.0; n * dv];
        let (qt, kt, vt) = (self.value(query), self.value(keys), self.value(values));
        for (i, seg) in segments.iter().enumerate() {
            let q = qt.row(i);
            let scores: Vec<f32> = seg.clone().map(|r| dot(q, kt.row(r))).collect();
            softmax_into(&scores, &mut weights[seg.clone()]);
            let o = &mut out[i * dv..(i + 1) * dv];
            for r in seg.clone() {
                let w = weights[r];
                for (ov, vv) in o.iter_mut().zip(vt.row(r)) {
                    *ov += w * vv;
                }
            }
        }
        let rg = self.any_grad(&[query, keys, values]);
        Ok(self.push(
            Tensor::matrix(n, dv, out)?,
            Op::Attend {
                query,
                keys,
                values,
                segments: segments.to_vec(),
                weights,
            },
            rg,
        ))
    }

    /// Single-query attention where the value rows double as keys.
    pub fn dot_attention(&mut self, key: Var, values: Var) -> Result<Var> {
        let rows = self.dims(values).0;
        self.attend(key, values, values, std::slice::from_ref(&(0..rows)))
    }

    /// Attention weights recorded by an [`attend`](Self::attend) node.
    pub fn attention_weights(&self, v: Var) -> Option<&[f32]> {
        match &self.nodes[v.0].op {
            Op::Attend { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f32>() / t.len() as f32;
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Reverse pass from a scalar node. Gradients are returned for every
    /// node that requires one; everything else stays `None`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Gradients { grads };
        }
        let seed = self.value(loss);
        grads[loss.0] = Some(Tensor::filled(seed.rows(), seed.cols(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dout) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &dout, &mut grads);
            grads[idx] = Some(dout);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, node: &Node, d: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, f: &dyn Fn(&mut Tensor)| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = &mut grads[v.0];
            if slot.is_none() {
                let val = &self.nodes[v.0].value;
                *slot = Some(Tensor::zeros(val.rows(), val.cols()));
            }
            f(slot.as_mut().unwrap());
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.dims(*a);
                let m = self.dims(*b).1;
                acc(*a, &|g| {
                    let bt = self.value(*b).transpose();
                    matmul_acc(d.data(), bt.data(), g.data_mut(), n, m, k);
                });
                acc(*b, &|g| {
                    let at = self.value(*a).transpose();
                    matmul_acc(at.data(), d.data(), g.data_mut(), k, n, m);
                });
            }
            Op::AddBias(x, b) => {
                acc(*x, &|g| g.add_assign(d));
                acc(*b, &|g| {
                    for i in 0..d.rows() {
                        for (gv, dv) in g.data_mut().iter_mut().zip(d.row(i)) {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|g| g.add_assign(d));
                acc(*b, &|g| g.add_assign(d));
            }
            Op::Sub(a, b) => {
                acc(*a, &|g| g.add_assign(d));
                acc(*b, &|g| {
                    for (gv, dv) in g.data_mut().iter_mut().zip(d.data()) {
                        *gv -= dv;
                    }
                });
            }
            Op::Mul(a, b) => {
                acc(*a, &|g| axpy_prod(g, d, self.value(*b)));
                acc(*b, &|g| axpy_prod(g, d, self.value(*a)));
            }
            Op::Scale(x, s) => acc(*x, &|g| {
                for (gv, dv) in g.data_mut().iter_mut().zip(d.data()) {
                    *gv += s * dv;
                }
            }),
            Op::AddScalar(x) => acc(*x, &|g| g.add_assign(d)),
            Op::Tanh(x) => acc(*x, &|g| {
                for ((gv, dv), y) in g.data_mut().iter_mut().zip(d.data()).zip(out.data()) {
                    *gv += dv * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => acc(*x, &|g| {
                for ((gv, dv), y) in g.data_mut().iter_mut().zip(d.data()).zip(out.data()) {
                    *gv += dv * y * (1.0 - y);
                }
            }),
            Op::Relu(x) => acc(*x, &|g| {
                for ((gv, dv), y) in g.data_mut().iter_mut().zip(d.data()).zip(out.data()) {
                    if *y > 0.0 {
                        *gv += dv;
                    }
                }
            }),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.dims(*p).1;
                    acc(*p, &|g| {
                        for i in 0..d.rows() {
                            for (gv, dv) in g.row_mut(i).iter_mut().zip(&d.row(i)[offset..offset + w]) {
                                *gv += dv;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (r, m) = self.dims(*p);
                    acc(*p, &|g| {
                        for (gv, dv) in g.data_mut().iter_mut().zip(&d.data()[offset * m..(offset + r) * m]) {
                            *gv += dv;
                        }
                    });
                    offset += r;
                }
            }
            Op::SliceCols(x, start) => {
                let w = d.cols();
                acc(*x, &|g| {
                    for i in 0..d.rows() {
                        for (gv, dv) in g.row_mut(i)[*start..start + w].iter_mut().zip(d.row(i)) {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::GatherRows(table, ids) => acc(*table, &|g| {
                for (i, id) in ids.iter().enumerate() {
                    for (gv, dv) in g.row_mut(*id).iter_mut().zip(d.row(i)) {
                        *gv += dv;
                    }
                }
            }),
            Op::SegmentMean(x, segments) => acc(*x, &|g| {
                for (i, seg) in segments.iter().enumerate() {
                    let inv = 1.0 / seg.len() as f32;
                    for r in seg.clone() {
                        for (gv, dv) in g.row_mut(r).iter_mut().zip(d.row(i)) {
                            *gv += dv * inv;
                        }
                    }
                }
            }),
            Op::SelectRows { keep, update, mask } => {
                for (target, want) in [(*keep, false), (*update, true)] {
                    acc(target, &|g| {
                        for (i, m) in mask.iter().enumerate() {
                            if *m == want {
                                for (gv, dv) in g.row_mut(i).iter_mut().zip(d.row(i)) {
                                    *gv += dv;
                                }
                            }
                        }
                    });
                }
            }
            Op::Softmax(x) => acc(*x, &|g| {
                for i in 0..d.rows() {
                    let y = out.row(i);
                    let dy = d.row(i);
                    let inner: f32 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    for ((gv, yv), dv) in g.row_mut(i).iter_mut().zip(y).zip(dy) {
                        *gv += yv * (dv - inner);
                    }
                }
            }),
            Op::SoftmaxXent { logits, probs, targets } => {
                let scale = d.item() / probs.rows() as f32;
                acc(*logits, &|g| {
                    for i in 0..probs.rows() {
                        let t_sum: f32 = targets.row(i).iter().sum();
                        for ((gv, p), t) in g.row_mut(i).iter_mut().zip(probs.row(i)).zip(targets.row(i)) {
                            *gv += scale * (t_sum * p - t);
                        }
                    }
                });
            }
            Op::Attend {
                query,
                keys,
                values,
                segments,
                weights,
            } => {
                let (qt, kt, vt) = (self.value(*query), self.value(*keys), self.value(*values));
                // d score_r = w_r * (dout . v_r - sum_s w_s dout . v_s)
                let mut dscore = vec![0.0; weights.len()];
                for (i, seg) in segments.iter().enumerate() {
                    let di = d.row(i);
                    let dw: Vec<f32> = seg.clone().map(|r| dot(di, vt.row(r))).collect();
                    let inner: f32 = seg.clone().zip(&dw).map(|(r, x)| weights[r] * x).sum();
                    for (r, x) in seg.clone().zip(&dw) {
                        dscore[r] = weights[r] * (x - inner);
                    }
                }
                acc(*values, &|g| {
                    for (i, seg) in segments.iter().enumerate() {
                        for r in seg.clone() {
                            let w = weights[r];
                            for (gv, dv) in g.row_mut(r).iter_mut().zip(d.row(i)) {
                                *gv += w * dv;
                            }
                        }
                    }
                });
                acc(*query, &|g| {
                    for (i, seg) in segments.iter().enumerate() {
                        for r in seg.clone() {
                            let s = dscore[r];
                            for (gv, kv) in g.row_mut(i).iter_mut().zip(kt.row(r)) {
                                *gv += s * kv;
                            }
                        }
                    }
                });
                acc(*keys, &|g| {
                    for (i, seg) in segments.iter().enumerate() {
                        for r in seg.clone() {
                            let s = dscore[r];
                            for (gv, qv) in g.row_mut(r).iter_mut().zip(qt.row(i)) {
                                *gv += s * qv;
                            }
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &|g| {
                let s = d.item();
                g.data_mut().iter_mut().for_each(|v| *v += s);
            }),
            Op::Mean(x) => acc(*x, &|g| {
                let s = d.item() / g.len() as f32;
                g.data_mut().iter_mut().for_each(|v| *v += s);
            }),
        }
    }
}

fn axpy_prod(g: &mut Tensor, d: &Tensor, other: &Tensor) {
    for ((gv, dv), ov) in g.data_mut().iter_mut().zip(d.data()).zip(other.data()) {
        *gv += dv * ov;
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
