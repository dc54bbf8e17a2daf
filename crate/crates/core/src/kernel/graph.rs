//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every op appends a node holding its output. Tensors are read as
//! `rows x cols` where `cols` is the last axis and `rows` the product of the
//! others. Reductions always run in index order so results are
//! bit-reproducible.

use std::collections::BTreeMap;

use super::tensor::{log_softmax, sigmoid, softmax, Tensor};
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScaleRows(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Concat(Vec<NodeId>),
    SliceCols(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    SegmentWeightedSum {
        weights: NodeId,
        values: NodeId,
        segments: Vec<usize>,
    },
    RowDots {
        query: NodeId,
        keys: NodeId,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<Option<usize>>,
    },
    Lstm(Box<LstmCache>),
    StraightThrough(NodeId),
    Sum(NodeId),
}

#[derive(Debug)]
struct LstmCache {
    x: NodeId,
    h: NodeId,
    c: NodeId,
    w: NodeId,
    b: NodeId,
    /// `[x, h]` rows, width `in + H`.
    xh: Vec<f64>,
    /// Post-activation gates `i, f, g, o`, width `4H`.
    gates: Vec<f64>,
    /// `tanh(c')`, width `H`.
    tanh_c: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only tape of tensor operations.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    contract!(t.is_finite(), "non-finite values in {what}");
    Ok(())
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let requires_grad = match &op {
            Op::Input => false,
            Op::Param => true,
            _ => self.inputs_of(&op).iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn inputs_of(&self, op: &Op) -> Vec<NodeId> {
        match op {
            Op::Input | Op::Param => vec![],
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Mul(a, b)
            | Op::ScaleRows(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::SliceCols(a, _)
            | Op::GatherRows(a, _)
            | Op::StraightThrough(a)
            | Op::Sum(a) => vec![*a],
            Op::Concat(xs) => xs.clone(),
            Op::SegmentWeightedSum {
                weights, values, ..
            } => vec![*weights, *values],
            Op::RowDots { query, keys } => vec![*query, *keys],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::Lstm(c) => vec![c.x, c.h, c.c, c.w, c.b],
        }
    }

    /// Constant leaf. Gradients are not propagated into it.
    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        check_finite(&value, "graph input")?;
        Ok(self.push(Op::Input, value))
    }

    /// Trainable leaf; `backward` reports a gradient for it.
    pub fn param(&mut self, value: Tensor) -> Result<NodeId> {
        check_finite(&value, "parameter")?;
        let id = self.push(Op::Param, value);
        self.params.push(id);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        contract!(
            ta.shape().len() <= 2 && tb.shape().len() == 2 && ta.cols() == tb.rows(),
            "matmul shape mismatch: {:?} x {:?}",
            ta.shape(),
            tb.shape()
        );
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; n * m];
        let (ad, bd) = (ta.data(), tb.data());
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let av = ad[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for (o, &bv) in orow.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                    *o += av * bv;
                }
            }
        }
        let value = Tensor::matrix(n, m, out)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `x + bias` with `bias` broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (tx, tb) = (self.value(x), self.value(bias));
        contract!(
            tb.len() == tx.cols(),
            "bias shape {:?} does not fit {:?}",
            tb.shape(),
            tx.shape()
        );
        let m = tx.cols();
        let mut value = tx.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += tb.data()[i % m];
        }
        Ok(self.push(Op::AddBias(x, bias), value))
    }

    /// `x · weight + bias`.
    pub fn affine(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, weight)?;
        self.add_bias(xw, bias)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        contract!(
            ta.shape() == tb.shape(),
            "{what} shape mismatch: {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape as input")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), value))
    }

    /// Multiplies row `r` of `x` by the scalar `s[r]`; `s` has one column.
    pub fn scale_rows(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (tx, ts) = (self.value(x), self.value(s));
        contract!(
            ts.cols() == 1 && ts.rows() == tx.rows(),
            "scale_rows shape mismatch: {:?} by {:?}",
            tx.shape(),
            ts.shape()
        );
        let m = tx.cols();
        let mut value = tx.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v *= ts.data()[i / m];
        }
        Ok(self.push(Op::ScaleRows(x, s), value))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        contract!(c.is_finite(), "non-finite scale factor");
        let value = self.value(x).map(|v| v * c);
        Ok(self.push(Op::Scale(x, c), value))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(sigmoid);
        Ok(self.push(Op::Sigmoid(x), value))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(f64::tanh);
        Ok(self.push(Op::Tanh(x), value))
    }

    fn rowwise(&self, x: NodeId, f: impl Fn(&[f64]) -> Vec<f64>) -> Tensor {
        let t = self.value(x);
        let data = (0..t.rows()).flat_map(|r| f(t.row(r))).collect();
        Tensor::new(t.shape().to_vec(), data).expect("same shape as input")
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        check_finite(self.value(x), "softmax input")?;
        let value = self.rowwise(x, softmax);
        Ok(self.push(Op::Softmax(x), value))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        check_finite(self.value(x), "log_softmax input")?;
        let value = self.rowwise(x, log_softmax);
        Ok(self.push(Op::LogSoftmax(x), value))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        contract!(!xs.is_empty(), "concat of nothing");
        let rows = self.value(xs[0]).rows();
        for &x in xs {
            contract!(
                self.value(x).rows() == rows,
                "concat row mismatch: {:?} vs {rows} rows",
                self.value(x).shape()
            );
        }
        let width: usize = xs.iter().map(|&x| self.value(x).cols()).sum();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &x in xs {
                data.extend_from_slice(self.value(x).row(r));
            }
        }
        let value = Tensor::matrix(rows, width, data)?;
        Ok(self.push(Op::Concat(xs.to_vec()), value))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let t = self.value(x);
        contract!(
            len > 0 && start + len <= t.cols(),
            "slice {start}..{} outside width {}",
            start + len,
            t.cols()
        );
        let rows = t.rows();
        let data = (0..rows)
            .flat_map(|r| t.row(r)[start..start + len].iter().copied())
            .collect();
        let value = Tensor::matrix(rows, len, data)?;
        Ok(self.push(Op::SliceCols(x, start), value))
    }

    /// Row selection; with a parameter table this is an embedding lookup.
    pub fn gather_rows(&mut self, x: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(x);
        contract!(!ids.is_empty(), "gather of no rows");
        let rows = t.rows();
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &i in ids {
            contract!(i < rows, "row id {i} out of range for {rows} rows");
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(ids.len(), t.cols(), data)?;
        Ok(self.push(Op::GatherRows(x, ids.to_vec()), value))
    }

    /// `out[s] = Σ_{n : segments[n] = s} weights[n] · values[n]`.
    ///
    /// `weights` has one column; every segment in `0..num_segments` must be
    /// non-empty.
    pub fn segment_weighted_sum(
        &mut self,
        weights: NodeId,
        values: NodeId,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<NodeId> {
        let (tw, tv) = (self.value(weights), self.value(values));
        contract!(
            tw.cols() == 1 && tw.rows() == tv.rows() && segments.len() == tv.rows(),
            "segment sum shape mismatch: weights {:?}, values {:?}, {} segment ids",
            tw.shape(),
            tv.shape(),
            segments.len()
        );
        let mut seen = vec![false; num_segments];
        for &s in segments {
            contract!(s < num_segments, "segment id {s} >= {num_segments}");
            seen[s] = true;
        }
        contract!(
            num_segments > 0 && seen.iter().all(|&b| b),
            "empty segment in weighted sum"
        );
        let d = tv.cols();
        let mut out = vec![0.0; num_segments * d];
        for (n, &s) in segments.iter().enumerate() {
            let w = tw.data()[n];
            for (o, &v) in out[s * d..(s + 1) * d].iter_mut().zip(tv.row(n)) {
                *o += w * v;
            }
        }
        let value = Tensor::matrix(num_segments, d, out)?;
        Ok(self.push(
            Op::SegmentWeightedSum {
                weights,
                values,
                segments: segments.to_vec(),
            },
            value,
        ))
    }

    /// `out[b, k] = query[b] · keys[b * K + k]` where `K = keys.rows / query.rows`.
    pub fn row_dots(&mut self, query: NodeId, keys: NodeId) -> Result<NodeId> {
        let (tq, tk) = (self.value(query), self.value(keys));
        let b = tq.rows();
        contract!(
            tq.cols() == tk.cols() && tk.rows() % b == 0 && tk.rows() >= b,
            "row_dots shape mismatch: {:?} vs {:?}",
            tq.shape(),
            tk.shape()
        );
        let k = tk.rows() / b;
        let mut out = Vec::with_capacity(b * k);
        for r in 0..b {
            let q = tq.row(r);
            for j in 0..k {
                out.push(dot(q, tk.row(r * k + j)));
            }
        }
        let value = Tensor::matrix(b, k, out)?;
        Ok(self.push(Op::RowDots { query, keys }, value))
    }

    /// Per-row cross-entropy of `logits` against class ids, as a `rows x 1`
    /// tensor. Rows with a `None` target contribute zero.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[Option<usize>]) -> Result<NodeId> {
        let t = self.value(logits);
        check_finite(t, "cross-entropy logits")?;
        contract!(
            targets.len() == t.rows(),
            "{} targets for {} rows of logits",
            targets.len(),
            t.rows()
        );
        let mut out = Vec::with_capacity(t.rows());
        for (r, target) in targets.iter().enumerate() {
            out.push(match *target {
                Some(c) => {
                    contract!(c < t.cols(), "target class {c} >= {}", t.cols());
                    -log_softmax(t.row(r))[c]
                }
                None => 0.0,
            });
        }
        let value = Tensor::matrix(t.rows(), 1, out)?;
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            value,
        ))
    }

    /// One LSTM step. `w` is `(in + H) x 4H` with gate blocks `i, f, g, o`,
    /// `b` has `4H` entries. Returns a `rows x 2H` node holding `[h', c']`;
    /// split it with [`Graph::lstm_split`].
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        w: NodeId,
        b: NodeId,
    ) -> Result<NodeId> {
        let (tx, th, tc, tw, tb) = (
            self.value(x),
            self.value(h),
            self.value(c),
            self.value(w),
            self.value(b),
        );
        let hid = th.cols();
        let rows = tx.rows();
        contract!(
            th.rows() == rows
                && tc.rows() == rows
                && tc.cols() == hid
                && tw.shape() == [tx.cols() + hid, 4 * hid]
                && tb.len() == 4 * hid,
            "lstm shape mismatch: x {:?}, h {:?}, c {:?}, w {:?}, b {:?}",
            tx.shape(),
            th.shape(),
            tc.shape(),
            tw.shape(),
            tb.shape()
        );
        let inw = tx.cols() + hid;
        let mut xh = Vec::with_capacity(rows * inw);
        for r in 0..rows {
            xh.extend_from_slice(tx.row(r));
            xh.extend_from_slice(th.row(r));
        }
        let g4 = 4 * hid;
        let mut gates = vec![0.0; rows * g4];
        for r in 0..rows {
            let z = &mut gates[r * g4..(r + 1) * g4];
            z.copy_from_slice(tb.data());
            for p in 0..inw {
                let a = xh[r * inw + p];
                if a == 0.0 {
                    continue;
                }
                for (zv, &wv) in z.iter_mut().zip(&tw.data()[p * g4..(p + 1) * g4]) {
                    *zv += a * wv;
                }
            }
            for (j, zv) in z.iter_mut().enumerate() {
                *zv = if (2 * hid..3 * hid).contains(&j) {
                    zv.tanh()
                } else {
                    sigmoid(*zv)
                };
            }
        }
        let mut out = vec![0.0; rows * 2 * hid];
        let mut tanh_c = vec![0.0; rows * hid];
        for r in 0..rows {
            let gt = &gates[r * g4..(r + 1) * g4];
            for j in 0..hid {
                let (i, f, g, o) = (gt[j], gt[hid + j], gt[2 * hid + j], gt[3 * hid + j]);
                let cn = f * tc.data()[r * hid + j] + i * g;
                let tcn = cn.tanh();
                tanh_c[r * hid + j] = tcn;
                out[r * 2 * hid + j] = o * tcn;
                out[r * 2 * hid + hid + j] = cn;
            }
        }
        let value = Tensor::matrix(rows, 2 * hid, out)?;
        Ok(self.push(
            Op::Lstm(Box::new(LstmCache {
                x,
                h,
                c,
                w,
                b,
                xh,
                gates,
                tanh_c,
            })),
            value,
        ))
    }

    /// Splits an [`Graph::lstm_cell`] output into `(h', c')`.
    pub fn lstm_split(&mut self, state: NodeId) -> Result<(NodeId, NodeId)> {
        let hid = self.value(state).cols() / 2;
        let h = self.slice_cols(state, 0, hid)?;
        let c = self.slice_cols(state, hid, hid)?;
        Ok((h, c))
    }

    /// Forward: one-hot of the row argmax. Backward: identity, so the
    /// gradient lands on the relaxed input unchanged.
    pub fn straight_through(&mut self, relaxed: NodeId) -> Result<NodeId> {
        let t = self.value(relaxed);
        let ids = t.argmax_rows();
        let value = Tensor::new(
            t.shape().to_vec(),
            Tensor::one_hot(&ids, t.cols())?.into_data(),
        )?;
        Ok(self.push(Op::StraightThrough(relaxed), value))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let value = Tensor::scalar(self.value(x).sum());
        Ok(self.push(Op::Sum(x), value))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        contract!(
            self.value(loss).len() == 1,
            "loss must be scalar, got shape {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(&node.op, &node.value, &gout, &mut grads);
            if matches!(node.op, Op::Param) {
                grads[id] = Some(gout);
            }
        }

        let params = self
            .params
            .iter()
            .map(|&p| {
                let g = grads[p.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.value(p).shape()));
                (p, g)
            })
            .collect();
        Ok(Gradients { params })
    }

    fn backprop_node(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |id: NodeId, delta: Tensor| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(t) => t.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let like = |id: NodeId, data: Vec<f64>| {
            Tensor::new(self.value(id).shape().to_vec(), data).expect("gradient shape")
        };

        match op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        let grow = g.row(i);
                        for p in 0..k {
                            da[i * k + p] = dot(grow, tb.row(p));
                        }
                    }
                    acc(*a, like(*a, da));
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        let grow = g.row(i);
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (d, &gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += av * gv;
                            }
                        }
                    }
                    acc(*b, like(*b, db));
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                let m = g.cols();
                let mut db = vec![0.0; m];
                for r in 0..g.rows() {
                    for (d, &v) in db.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                acc(*b, like(*b, db));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let db = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                acc(*a, like(*a, da));
                acc(*b, like(*b, db));
            }
            Op::ScaleRows(x, s) => {
                let (tx, ts) = (self.value(*x), self.value(*s));
                let m = tx.cols();
                let dx = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * ts.data()[i / m])
                    .collect();
                let ds = (0..tx.rows()).map(|r| dot(g.row(r), tx.row(r))).collect();
                acc(*x, like(*x, dx));
                acc(*s, like(*s, ds));
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| v * c)),
            Op::Sigmoid(x) => {
                let dx = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect();
                acc(*x, like(*x, dx));
            }
            Op::Tanh(x) => {
                let dx = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * (1.0 - y * y))
                    .collect();
                acc(*x, like(*x, dx));
            }
            Op::Softmax(x) => {
                let mut dx = Vec::with_capacity(g.len());
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), out.row(r));
                    let s = dot(gr, yr);
                    dx.extend(gr.iter().zip(yr).map(|(gv, y)| y * (gv - s)));
                }
                acc(*x, like(*x, dx));
            }
            Op::LogSoftmax(x) => {
                let mut dx = Vec::with_capacity(g.len());
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), out.row(r));
                    let s: f64 = gr.iter().sum();
                    dx.extend(gr.iter().zip(yr).map(|(gv, y)| gv - y.exp() * s));
                }
                acc(*x, like(*x, dx));
            }
            Op::Concat(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let w = self.value(x).cols();
                    let rows = g.rows();
                    let dx = (0..rows)
                        .flat_map(|r| g.row(r)[offset..offset + w].iter().copied())
                        .collect();
                    acc(x, like(x, dx));
                    offset += w;
                }
            }
            Op::SliceCols(x, start) => {
                let tx = self.value(*x);
                let (m, w) = (tx.cols(), g.cols());
                let mut dx = vec![0.0; tx.len()];
                for r in 0..g.rows() {
                    dx[r * m + start..r * m + start + w].copy_from_slice(g.row(r));
                }
                acc(*x, like(*x, dx));
            }
            Op::GatherRows(x, ids) => {
                let tx = self.value(*x);
                let m = tx.cols();
                let mut dx = vec![0.0; tx.len()];
                for (r, &i) in ids.iter().enumerate() {
                    for (d, &v) in dx[i * m..(i + 1) * m].iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                acc(*x, like(*x, dx));
            }
            Op::SegmentWeightedSum {
                weights,
                values,
                segments,
            } => {
                let (tw, tv) = (self.value(*weights), self.value(*values));
                let d = tv.cols();
                let dw = segments
                    .iter()
                    .enumerate()
                    .map(|(n, &s)| dot(g.row(s), tv.row(n)))
                    .collect();
                let mut dv = vec![0.0; tv.len()];
                for (n, &s) in segments.iter().enumerate() {
                    let w = tw.data()[n];
                    for (o, &gv) in dv[n * d..(n + 1) * d].iter_mut().zip(g.row(s)) {
                        *o = w * gv;
                    }
                }
                acc(*weights, like(*weights, dw));
                acc(*values, like(*values, dv));
            }
            Op::RowDots { query, keys } => {
                let (tq, tk) = (self.value(*query), self.value(*keys));
                let (b, d) = (tq.rows(), tq.cols());
                let k = tk.rows() / b;
                let mut dq = vec![0.0; tq.len()];
                let mut dk = vec![0.0; tk.len()];
                for r in 0..b {
                    for j in 0..k {
                        let gv = g.data()[r * k + j];
                        let key = r * k + j;
                        for t in 0..d {
                            dq[r * d + t] += gv * tk.data()[key * d + t];
                            dk[key * d + t] += gv * tq.data()[r * d + t];
                        }
                    }
                }
                acc(*query, like(*query, dq));
                acc(*keys, like(*keys, dk));
            }
            Op::CrossEntropy { logits, targets } => {
                let tl = self.value(*logits);
                let mut dx = Vec::with_capacity(tl.len());
                for (r, target) in targets.iter().enumerate() {
                    match *target {
                        Some(c) => {
                            let p = softmax(tl.row(r));
                            let gv = g.data()[r];
                            dx.extend(p.iter().enumerate().map(|(j, &pj)| {
                                gv * (pj - if j == c { 1.0 } else { 0.0 })
                            }));
                        }
                        None => dx.extend(std::iter::repeat(0.0).take(tl.cols())),
                    }
                }
                acc(*logits, like(*logits, dx));
            }
            Op::Lstm(cache) => self.backprop_lstm(cache, g, &mut acc),
            Op::StraightThrough(x) => acc(*x, g.clone()),
            Op::Sum(x) => {
                let tx = self.value(*x);
                acc(*x, Tensor::filled(tx.shape(), g.item()));
            }
        }
    }

    fn backprop_lstm(&self, cache: &LstmCache, g: &Tensor, acc: &mut impl FnMut(NodeId, Tensor)) {
        let tc = self.value(cache.c);
        let tw = self.value(cache.w);
        let hid = tc.cols();
        let rows = tc.rows();
        let inw = tw.rows();
        let in_x = inw - hid;
        let g4 = 4 * hid;

        let mut dz = vec![0.0; rows * g4];
        let mut dc_prev = vec![0.0; rows * hid];
        for r in 0..rows {
            let gt = &cache.gates[r * g4..(r + 1) * g4];
            let gr = g.row(r);
            for j in 0..hid {
                let (i, f, gg, o) = (gt[j], gt[hid + j], gt[2 * hid + j], gt[3 * hid + j]);
                let tcn = cache.tanh_c[r * hid + j];
                let dh = gr[j];
                let dc = gr[hid + j] + dh * o * (1.0 - tcn * tcn);
                let cprev = tc.data()[r * hid + j];
                let z = &mut dz[r * g4..(r + 1) * g4];
                z[j] = dc * gg * i * (1.0 - i);
                z[hid + j] = dc * cprev * f * (1.0 - f);
                z[2 * hid + j] = dc * i * (1.0 - gg * gg);
                z[3 * hid + j] = dh * tcn * o * (1.0 - o);
                dc_prev[r * hid + j] = dc * f;
            }
        }

        if self.nodes[cache.w.0].requires_grad {
            let mut dw = vec![0.0; inw * g4];
            for r in 0..rows {
                let zr = &dz[r * g4..(r + 1) * g4];
                for p in 0..inw {
                    let a = cache.xh[r * inw + p];
                    if a == 0.0 {
                        continue;
                    }
                    for (d, &zv) in dw[p * g4..(p + 1) * g4].iter_mut().zip(zr) {
                        *d += a * zv;
                    }
                }
            }
            acc(cache.w, Tensor::new(tw.shape().to_vec(), dw).expect("w grad"));
        }
        if self.nodes[cache.b.0].requires_grad {
            let mut db = vec![0.0; g4];
            for r in 0..rows {
                for (d, &zv) in db.iter_mut().zip(&dz[r * g4..(r + 1) * g4]) {
                    *d += zv;
                }
            }
            let shape = self.value(cache.b).shape().to_vec();
            acc(cache.b, Tensor::new(shape, db).expect("b grad"));
        }
        let need_x = self.nodes[cache.x.0].requires_grad;
        let need_h = self.nodes[cache.h.0].requires_grad;
        if need_x || need_h {
            let mut dxh = vec![0.0; rows * inw];
            for r in 0..rows {
                let zr = &dz[r * g4..(r + 1) * g4];
                for p in 0..inw {
                    dxh[r * inw + p] = dot(zr, &tw.data()[p * g4..(p + 1) * g4]);
                }
            }
            if need_x {
                let dx = (0..rows)
                    .flat_map(|r| dxh[r * inw..r * inw + in_x].iter().copied())
                    .collect();
                let shape = self.value(cache.x).shape().to_vec();
                acc(cache.x, Tensor::new(shape, dx).expect("x grad"));
            }
            if need_h {
                let dh = (0..rows)
                    .flat_map(|r| dxh[r * inw + in_x..(r + 1) * inw].iter().copied())
                    .collect();
                let shape = self.value(cache.h).shape().to_vec();
                acc(cache.h, Tensor::new(shape, dh).expect("h grad"));
            }
        }
        let shape = tc.shape().to_vec();
        acc(cache.c, Tensor::new(shape, dc_prev).expect("c grad"));
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients of one backward sweep, keyed by parameter node.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: BTreeMap<NodeId, Tensor>,
}

impl Gradients {
    /// Gradient for a parameter node; all zeros if the loss does not reach it.
    pub fn get(&self, param: NodeId) -> Option<&Tensor> {
        self.params.get(&param)
    }

    pub fn take(&mut self, param: NodeId) -> Option<Tensor> {
        self.params.remove(&param)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }
}
