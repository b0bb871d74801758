//! Reverse-mode autodiff on an operation tape.
//!
//! Ops evaluate eagerly and record themselves; node ids only ever reference
//! earlier nodes, so reverse id order is a reverse topological order and the
//! backward sweep visits each node exactly once. Every op checks its output
//! for non-finite values so NaN/Inf surface where they are produced instead
//! of propagating silently.

use crate::rng::Rng;
use crate::scalar::Scalar;

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use super::{GradError, ParamSet};

/// Index of a node on a [`Tape`].
pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Constant input; no gradient tracked.
    Leaf,
    /// Trainable parameter occupying the given [`ParamSet`] slot.
    Param(usize),
    MatMul(NodeId, NodeId),
    /// a * b^T with b stored untransposed.
    MatMulNt(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Matrix plus a 1 x c row broadcast over rows.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    /// Row-wise softmax of a 1 x n vector (max-subtracted).
    SoftmaxRow(NodeId),
    LogSoftmaxRow(NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize, usize),
    SumAll(NodeId),
    /// Mean over rows of an r x c matrix, producing 1 x c.
    MeanRows(NodeId),
    /// Single element of a 1 x n row, producing 1 x 1.
    Gather(NodeId, usize),
}

struct Node<S: Scalar> {
    op: Op,
    value: Tensor<S>,
}

/// Wengert tape: eager forward evaluation plus recorded structure for the
/// backward sweep. One tape per rollout segment; independent tapes never
/// share state.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    n_params: usize,
}

/// Per-parameter gradients aligned with [`ParamSet`] registration order.
#[derive(Debug, Clone)]
pub struct Gradients<S: Scalar> {
    by_slot: Vec<Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn from_slots(by_slot: Vec<Tensor<S>>) -> Self {
        Gradients { by_slot }
    }

    pub fn slots(&self) -> &[Tensor<S>] {
        &self.by_slot
    }

    pub fn slots_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.by_slot
    }

    /// Global L2 norm across all slots.
    pub fn global_norm(&self) -> S {
        self.by_slot
            .iter()
            .fold(S::zero(), |acc, t| {
                acc + t.data().iter().fold(S::zero(), |a, &v| a + v * v)
            })
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.by_slot.iter().all(|t| t.is_finite())
    }
}

/// Forward/eval switch for stochastic layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::with_capacity(256),
            n_params: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Tensor<S>) -> Result<NodeId, GradError> {
        if !value.is_finite() {
            return Err(GradError::NonFinite { op: op_name(&op) });
        }
        self.nodes.push(Node { op, value });
        Ok(self.nodes.len() - 1)
    }

    /// Record a constant. Gradient never flows into it.
    pub fn constant(&mut self, value: Tensor<S>) -> Result<NodeId, GradError> {
        self.push(Op::Leaf, value)
    }

    /// Record every tensor of `params` as a differentiable leaf, in
    /// registration order. Returns one node id per slot.
    pub fn register_params(&mut self, params: &ParamSet<S>) -> Result<Vec<NodeId>, GradError> {
        debug_assert_eq!(self.n_params, 0, "params registered twice on one tape");
        self.n_params = params.len();
        params
            .tensors()
            .enumerate()
            .map(|(slot, t)| self.push(Op::Param(slot), t.clone()))
            .collect()
    }

    fn shape_err(&self, op: &'static str, a: NodeId, b: NodeId) -> GradError {
        GradError::ShapeMismatch {
            op,
            lhs: self.nodes[a].value.shape().to_vec(),
            rhs: self.nodes[b].value.shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.cols() != tb.rows() {
            return Err(self.shape_err("matmul", a, b));
        }
        let v = matmul(ta, tb);
        self.push(Op::MatMul(a, b), v)
    }

    /// a * b^T; `b` is given untransposed with matching inner width.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.cols() != tb.cols() {
            return Err(self.shape_err("matmul_nt", a, b));
        }
        let v = matmul_nt(ta, tb);
        self.push(Op::MatMulNt(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape() != tb.shape() {
            return Err(self.shape_err("add", a, b));
        }
        let mut v = ta.clone();
        v.add_assign(tb);
        self.push(Op::Add(a, b), v)
    }

    /// Broadcast a 1 x c bias over the rows of an r x c matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, GradError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[bias].value);
        if tb.rows() != 1 || ta.cols() != tb.cols() {
            return Err(self.shape_err("add_row", a, bias));
        }
        let c = ta.cols();
        let mut v = ta.clone();
        for i in 0..v.rows() {
            for j in 0..c {
                let x = v.at(i, j) + tb.at(0, j);
                v.set(i, j, x);
            }
        }
        self.push(Op::AddRow(a, bias), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape() != tb.shape() {
            return Err(self.shape_err("sub", a, b));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x - y)
            .collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape() != tb.shape() {
            return Err(self.shape_err("mul", a, b));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId, GradError> {
        let ks = S::from_f64(k);
        let v = self.nodes[a].value.map(|x| x * ks);
        self.push(Op::Scale(a, k), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let one = S::one();
        let v = self.nodes[a].value.map(|x| one / (one + (-x).exp()));
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let v = self.nodes[a].value.map(|x| x.tanh());
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let v = self.nodes[a].value.map(|x| x.max(S::zero()));
        self.push(Op::Relu(a), v)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let v = self.nodes[a].value.map(|x| x.abs());
        self.push(Op::Abs(a), v)
    }

    /// Numerically stable softmax of a 1 x n row (n >= 1).
    pub fn softmax_row(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let v = softmax_value(&self.nodes[a].value)?;
        self.push(Op::SoftmaxRow(a), v)
    }

    pub fn log_softmax_row(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let t = &self.nodes[a].value;
        if t.rows() != 1 || t.numel() == 0 {
            return Err(GradError::EmptyVector { op: "log_softmax" });
        }
        let max = t.data().iter().fold(S::neg_infinity(), |m, &x| m.max(x));
        let log_z = t
            .data()
            .iter()
            .fold(S::zero(), |acc, &x| acc + (x - max).exp())
            .ln()
            + max;
        let v = t.map(|x| x - log_z);
        self.push(Op::LogSoftmaxRow(a), v)
    }

    /// Concatenate two single-row tensors along columns.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.rows() != 1 || tb.rows() != 1 {
            return Err(self.shape_err("concat_cols", a, b));
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        let v = Tensor::row(data);
        self.push(Op::ConcatCols(a, b), v)
    }

    /// Columns [start, start+len) of a single-row tensor.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, GradError> {
        let ta = &self.nodes[a].value;
        if ta.rows() != 1 || start + len > ta.cols() {
            return Err(GradError::ShapeMismatch {
                op: "slice_cols",
                lhs: ta.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let v = Tensor::row(ta.data()[start..start + len].to_vec());
        self.push(Op::SliceCols(a, start, len), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let s = self.nodes[a]
            .value
            .data()
            .iter()
            .fold(S::zero(), |acc, &x| acc + x);
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let t = &self.nodes[a].value;
        let (r, c) = (t.rows(), t.cols());
        let inv = S::from_f64(1.0 / r as f64);
        let mut out = Tensor::zeros(1, c);
        for i in 0..r {
            for j in 0..c {
                let x = out.at(0, j) + t.at(i, j) * inv;
                out.set(0, j, x);
            }
        }
        self.push(Op::MeanRows(a), out)
    }

    pub fn gather(&mut self, a: NodeId, idx: usize) -> Result<NodeId, GradError> {
        let t = &self.nodes[a].value;
        if t.rows() != 1 || idx >= t.cols() {
            return Err(GradError::ShapeMismatch {
                op: "gather",
                lhs: t.shape().to_vec(),
                rhs: vec![idx],
            });
        }
        let v = Tensor::scalar(t.at(0, idx));
        self.push(Op::Gather(a, idx), v)
    }

    /// Fully-connected layer: x * w + b with b broadcast over rows.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Inverted dropout. Eval mode and rate 0 are the identity; train mode
    /// zeroes entries with probability `rate` and scales survivors by
    /// 1/(1-rate), recording the mask as a constant factor so the backward
    /// pass reuses it.
    pub fn dropout(
        &mut self,
        x: NodeId,
        rate: f64,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<NodeId, GradError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(GradError::BadDropoutRate { rate });
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let t = &self.nodes[x].value;
        let mask_data: Vec<S> = (0..t.numel())
            .map(|_| {
                if rng.chance(rate) {
                    S::zero()
                } else {
                    S::from_f64(keep)
                }
            })
            .collect();
        let mask = self.constant(Tensor::new(t.shape().to_vec(), mask_data)?)?;
        self.mul(x, mask)
    }

    /// Standard LSTM cell step. Gate layout along the fused width is
    /// [input, forget, candidate, output].
    pub fn lstm_step(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        bias: NodeId,
    ) -> Result<(NodeId, NodeId), GradError> {
        let hidden = self.nodes[h].value.cols();
        if self.nodes[c].value.cols() != hidden || self.nodes[bias].value.cols() != 4 * hidden {
            return Err(self.shape_err("lstm_step", h, bias));
        }
        let xw = self.matmul(x, w_ih)?;
        let hw = self.matmul(h, w_hh)?;
        let pre = self.add(xw, hw)?;
        let gates = self.add_row(pre, bias)?;
        let i_gate = {
            let s = self.slice_cols(gates, 0, hidden)?;
            self.sigmoid(s)?
        };
        let f_gate = {
            let s = self.slice_cols(gates, hidden, hidden)?;
            self.sigmoid(s)?
        };
        let g_cand = {
            let s = self.slice_cols(gates, 2 * hidden, hidden)?;
            self.tanh(s)?
        };
        let o_gate = {
            let s = self.slice_cols(gates, 3 * hidden, hidden)?;
            self.sigmoid(s)?
        };
        let fc = self.mul(f_gate, c)?;
        let ig = self.mul(i_gate, g_cand)?;
        let c_next = self.add(fc, ig)?;
        let c_act = self.tanh(c_next)?;
        let h_next = self.mul(o_gate, c_act)?;
        Ok((h_next, c_next))
    }

    /// Full reverse sweep seeded at `loss` (must be 1 x 1). Returns the
    /// gradient of every node, None where no gradient reaches.
    fn sweep(&self, loss: NodeId) -> Result<Vec<Option<Tensor<S>>>, GradError> {
        let lt = &self.nodes[loss].value;
        if lt.numel() != 1 {
            return Err(GradError::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Tensor::scalar(S::one()));

        for id in (0..=loss).rev() {
            let g = match grads[id].clone() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    accumulate(&mut grads, *a, matmul_nt(&g, &self.nodes[*b].value));
                    accumulate(&mut grads, *b, matmul_tn(&self.nodes[*a].value, &g));
                }
                Op::MatMulNt(a, b) => {
                    accumulate(&mut grads, *a, matmul(&g, &self.nodes[*b].value));
                    accumulate(&mut grads, *b, matmul_tn(&g, &self.nodes[*a].value));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, bias) => {
                    let c = g.cols();
                    let mut db = Tensor::zeros(1, c);
                    for i in 0..g.rows() {
                        for j in 0..c {
                            let x = db.at(0, j) + g.at(i, j);
                            db.set(0, j, x);
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, elementwise(&g, &self.nodes[*b].value));
                    accumulate(&mut grads, *b, elementwise(&g, &self.nodes[*a].value));
                }
                Op::Scale(a, k) => {
                    let ks = S::from_f64(*k);
                    accumulate(&mut grads, *a, g.map(|x| x * ks));
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    let one = S::one();
                    accumulate(&mut grads, *a, zip_map(&g, y, |gi, yi| gi * yi * (one - yi)));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    let one = S::one();
                    accumulate(&mut grads, *a, zip_map(&g, y, |gi, yi| gi * (one - yi * yi)));
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    accumulate(
                        &mut grads,
                        *a,
                        zip_map(&g, x, |gi, xi| if xi > S::zero() { gi } else { S::zero() }),
                    );
                }
                Op::Abs(a) => {
                    let x = &self.nodes[*a].value;
                    accumulate(
                        &mut grads,
                        *a,
                        zip_map(&g, x, |gi, xi| {
                            if xi > S::zero() {
                                gi
                            } else if xi < S::zero() {
                                -gi
                            } else {
                                S::zero()
                            }
                        }),
                    );
                }
                Op::SoftmaxRow(a) => {
                    let y = &self.nodes[id].value;
                    let dot = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .fold(S::zero(), |acc, (&gi, &yi)| acc + gi * yi);
                    accumulate(&mut grads, *a, zip_map(&g, y, |gi, yi| yi * (gi - dot)));
                }
                Op::LogSoftmaxRow(a) => {
                    let y = &self.nodes[id].value;
                    let gsum = g.data().iter().fold(S::zero(), |acc, &x| acc + x);
                    accumulate(&mut grads, *a, zip_map(&g, y, |gi, yi| gi - yi.exp() * gsum));
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[*a].value.cols();
                    accumulate(&mut grads, *a, Tensor::row(g.data()[..ca].to_vec()));
                    accumulate(&mut grads, *b, Tensor::row(g.data()[ca..].to_vec()));
                }
                Op::SliceCols(a, start, len) => {
                    let mut da = Tensor::zeros(1, self.nodes[*a].value.cols());
                    for j in 0..*len {
                        da.set(0, start + j, g.at(0, j));
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SumAll(a) => {
                    let src = &self.nodes[*a].value;
                    accumulate(&mut grads, *a, Tensor::full(src.rows(), src.cols(), g.item()));
                }
                Op::MeanRows(a) => {
                    let src = &self.nodes[*a].value;
                    let inv = S::from_f64(1.0 / src.rows() as f64);
                    let mut da = Tensor::zeros(src.rows(), src.cols());
                    for i in 0..src.rows() {
                        for j in 0..src.cols() {
                            da.set(i, j, g.at(0, j) * inv);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Gather(a, idx) => {
                    let mut da = Tensor::zeros(1, self.nodes[*a].value.cols());
                    da.set(0, *idx, g.item());
                    accumulate(&mut grads, *a, da);
                }
            }
        }
        Ok(grads)
    }

    /// Reverse-mode gradients of a scalar loss for every registered
    /// parameter. Slots unreachable from the loss get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<S>, GradError> {
        let mut node_grads = self.sweep(loss)?;
        let mut by_slot: Vec<Option<Tensor<S>>> = (0..self.n_params).map(|_| None).collect();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(slot) = node.op {
                if let Some(g) = node_grads[id].take() {
                    match &mut by_slot[slot] {
                        Some(acc) => acc.add_assign(&g),
                        entry @ None => *entry = Some(g),
                    }
                }
            }
        }
        let by_slot: Vec<Tensor<S>> = by_slot
            .into_iter()
            .enumerate()
            .map(|(slot, g)| {
                g.unwrap_or_else(|| {
                    let (r, c) = self.param_shape(slot);
                    Tensor::zeros(r, c)
                })
            })
            .collect();
        let out = Gradients { by_slot };
        if !out.is_finite() {
            return Err(GradError::NonFinite { op: "backward" });
        }
        Ok(out)
    }

    /// Gradient of `loss` with respect to an arbitrary node (test support).
    pub fn grad_wrt(&self, loss: NodeId, node: NodeId) -> Result<Tensor<S>, GradError> {
        let grads = self.sweep(loss)?;
        Ok(grads[node].clone().unwrap_or_else(|| {
            let t = &self.nodes[node].value;
            Tensor::zeros(t.rows(), t.cols())
        }))
    }

    fn param_shape(&self, slot: usize) -> (usize, usize) {
        for n in &self.nodes {
            if let Op::Param(s) = n.op {
                if s == slot {
                    return (n.value.rows(), n.value.cols());
                }
            }
        }
        (1, 1)
    }
}

/// Softmax of a 1 x n row with max subtraction.
pub fn softmax_value<S: Scalar>(t: &Tensor<S>) -> Result<Tensor<S>, GradError> {
    if t.rows() != 1 || t.numel() == 0 {
        return Err(GradError::EmptyVector { op: "softmax" });
    }
    let max = t.data().iter().fold(S::neg_infinity(), |m, &x| m.max(x));
    let mut data: Vec<S> = t.data().iter().map(|&x| (x - max).exp()).collect();
    let z = data.iter().fold(S::zero(), |acc, &x| acc + x);
    for v in &mut data {
        *v = *v / z;
    }
    Ok(Tensor::row(data))
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "constant",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::MatMulNt(..) => "matmul_nt",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Relu(_) => "relu",
        Op::Abs(_) => "abs",
        Op::SoftmaxRow(_) => "softmax",
        Op::LogSoftmaxRow(_) => "log_softmax",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceCols(..) => "slice_cols",
        Op::SumAll(_) => "sum",
        Op::MeanRows(_) => "mean_rows",
        Op::Gather(..) => "gather",
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Tensor<S>>], id: NodeId, g: Tensor<S>) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        entry @ None => *entry = Some(g),
    }
}

fn elementwise<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
    .expect("zip_map shape")
}
