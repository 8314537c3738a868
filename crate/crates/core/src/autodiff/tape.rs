//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Tape`] is built per example and discarded after the step. Nodes are
//! append-only, so parents always precede children and reverse insertion
//! order is a reverse topological order: backward visits each node exactly
//! once. Every op checks shapes up front and value finiteness after
//! computing; broadcasting is limited to bias-vector addition onto matrix
//! rows.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::params::{ParamId, Params};
use super::tensor::Tensor;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got {len} elements")]
    NonScalarLoss { len: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    Reshape(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax { x: NodeId, axis: usize },
    SumAxis { x: NodeId, axis: usize },
    SumAll(NodeId),
    Embed { table: NodeId, index: usize },
    NegLogProb { dist: NodeId, index: usize },
    Dropout { x: NodeId, mask: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Lane decomposition for axis-wise ops on row-major data: the elements of
/// one lane along `axis` are `base + k * inner` for `k < axis_len`.
fn lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, axis_len, inner)
}

#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, NodeId>,
    rng: ChaCha8Rng,
    train: bool,
}

impl Tape {
    /// A tape for training: dropout masks are drawn from the seeded rng.
    pub fn training(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            train: true,
        }
    }

    /// A tape for inference: dropout is the identity.
    pub fn eval() -> Self {
        Tape {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            train: false,
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    /// The tape's rng, shared with decode-time sampling so one seed fixes a
    /// whole episode.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
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

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, grad: None, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        value: Tensor,
        op: Op,
        needs_grad: bool,
        name: &'static str,
    ) -> Result<NodeId, AdError> {
        if !value.all_finite() {
            return Err(AdError::NonFinite { op: name });
        }
        Ok(self.push(value, op, needs_grad))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant input; gradients never flow into it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Free variable for tests and probes: a leaf that accumulates gradient.
    pub fn var(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Bring a parameter into the graph. Repeated calls for the same id
    /// return the same node, so a parameter used in many places accumulates
    /// one gradient.
    pub fn param(&mut self, params: &Params, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id.index()) {
            return node;
        }
        let node = self.push(params.value(id).clone(), Op::Param, true);
        self.param_nodes.insert(id.index(), node);
        node
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(AdError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_vec(va.shape(), data);
        let needs = self.needs(a) || self.needs(b);
        self.push_checked(value, Op::Add(a, b), needs, "add")
    }

    /// Broadcast a bias vector onto every row of a matrix — the only
    /// broadcasting this tape performs.
    pub fn add_bias(&mut self, mat: NodeId, bias: NodeId) -> Result<NodeId, AdError> {
        let (vm, vb) = (self.value(mat), self.value(bias));
        let ok = vm.shape().len() == 2 && vb.shape().len() == 1 && vm.shape()[1] == vb.shape()[0];
        if !ok {
            return Err(AdError::ShapeMismatch {
                op: "add_bias",
                detail: format!("{:?} + {:?}", vm.shape(), vb.shape()),
            });
        }
        let (rows, cols) = vm.dims2();
        let mut data = vm.data().to_vec();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += vb.data()[c];
            }
        }
        let value = Tensor::from_vec(vm.shape(), data);
        let needs = self.needs(mat) || self.needs(bias);
        self.push_checked(value, Op::AddBias(mat, bias), needs, "add_bias")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(AdError::ShapeMismatch {
                op: "mul",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(va.shape(), data);
        let needs = self.needs(a) || self.needs(b);
        self.push_checked(value, Op::Mul(a, b), needs, "mul")
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId, AdError> {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x * k).collect();
        let value = Tensor::from_vec(va.shape(), data);
        let needs = self.needs(a);
        self.push_checked(value, Op::Scale(a, k), needs, "scale")
    }

    /// `[m,k] x [k,n] -> [m,n]`, or `[m,k] x [k] -> [m]` for a vector
    /// right-hand side.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (va, vb) = (self.value(a), self.value(b));
        match (va.shape().len(), vb.shape().len()) {
            (2, 2) => {
                let (m, k) = va.dims2();
                let (k2, n) = vb.dims2();
                if k != k2 {
                    return Err(AdError::ShapeMismatch {
                        op: "matmul",
                        detail: format!("{:?} x {:?}", va.shape(), vb.shape()),
                    });
                }
                let mut data = vec![0.0; m * n];
                let (ad, bd) = (va.data(), vb.data());
                for i in 0..m {
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            data[i * n + j] += aip * bd[p * n + j];
                        }
                    }
                }
                let value = Tensor::from_vec(&[m, n], data);
                let needs = self.needs(a) || self.needs(b);
                self.push_checked(value, Op::MatMul(a, b), needs, "matmul")
            }
            (2, 1) => {
                let (m, k) = va.dims2();
                if k != vb.shape()[0] {
                    return Err(AdError::ShapeMismatch {
                        op: "matmul",
                        detail: format!("{:?} x {:?}", va.shape(), vb.shape()),
                    });
                }
                let (ad, bd) = (va.data(), vb.data());
                let data: Vec<f64> = (0..m)
                    .map(|i| (0..k).map(|p| ad[i * k + p] * bd[p]).sum())
                    .collect();
                let value = Tensor::from_vec(&[m], data);
                let needs = self.needs(a) || self.needs(b);
                self.push_checked(value, Op::MatVec(a, b), needs, "matmul")
            }
            _ => Err(AdError::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", va.shape(), vb.shape()),
            }),
        }
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, AdError> {
        if parts.is_empty() {
            return Err(AdError::Invalid("concat of zero tensors".into()));
        }
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(AdError::ShapeMismatch {
                op: "concat",
                detail: format!("axis {} out of range for {:?}", axis, first),
            });
        }
        let mut out_shape = first.clone();
        let mut axis_total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(AdError::ShapeMismatch {
                    op: "concat",
                    detail: format!("{:?} vs {:?} on axis {}", s, first, axis),
                });
            }
            axis_total += s[axis];
        }
        out_shape[axis] = axis_total;
        let (outer, out_axis, inner) = lanes(&out_shape, axis);
        let mut data = vec![0.0; outer * out_axis * inner];
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            let part_axis = v.shape()[axis];
            let pd = v.data();
            for o in 0..outer {
                for k in 0..part_axis {
                    let src = (o * part_axis + k) * inner;
                    let dst = (o * out_axis + offset + k) * inner;
                    data[dst..dst + inner].copy_from_slice(&pd[src..src + inner]);
                }
            }
            offset += part_axis;
        }
        let value = Tensor::from_vec(&out_shape, data);
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push_checked(value, Op::Concat { parts: parts.to_vec(), axis }, needs, "concat")
    }

    /// Same data, new shape (row-major layouts coincide).
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, AdError> {
        let va = self.value(a);
        if shape.iter().product::<usize>() != va.len() {
            return Err(AdError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", va.shape(), shape),
            });
        }
        let value = Tensor::from_vec(shape, va.data().to_vec());
        let needs = self.needs(a);
        self.push_checked(value, Op::Reshape(a), needs, "reshape")
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::from_vec(va.shape(), data);
        let needs = self.needs(a);
        self.push_checked(value, Op::Tanh(a), needs, "tanh")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .map(|&x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            })
            .collect();
        let value = Tensor::from_vec(va.shape(), data);
        let needs = self.needs(a);
        self.push_checked(value, Op::Sigmoid(a), needs, "sigmoid")
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId, AdError> {
        let va = self.value(a);
        if axis >= va.shape().len() {
            return Err(AdError::ShapeMismatch {
                op: "softmax",
                detail: format!("axis {} out of range for {:?}", axis, va.shape()),
            });
        }
        let (outer, axis_len, inner) = lanes(va.shape(), axis);
        let mut data = va.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut max = f64::NEG_INFINITY;
                for k in 0..axis_len {
                    max = max.max(data[base + k * inner]);
                }
                let mut sum = 0.0;
                for k in 0..axis_len {
                    let e = (data[base + k * inner] - max).exp();
                    data[base + k * inner] = e;
                    sum += e;
                }
                for k in 0..axis_len {
                    data[base + k * inner] /= sum;
                }
            }
        }
        let value = Tensor::from_vec(va.shape(), data);
        let needs = self.needs(a);
        self.push_checked(value, Op::Softmax { x: a, axis }, needs, "softmax")
    }

    /// Sum along one axis; the axis is removed (a fully reduced tensor
    /// becomes a `[1]` scalar).
    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId, AdError> {
        let va = self.value(a);
        if axis >= va.shape().len() {
            return Err(AdError::ShapeMismatch {
                op: "sum_axis",
                detail: format!("axis {} out of range for {:?}", axis, va.shape()),
            });
        }
        let (outer, axis_len, inner) = lanes(va.shape(), axis);
        let mut out_shape: Vec<usize> = va
            .shape()
            .iter()
            .enumerate()
            .filter(|&(d, _)| d != axis)
            .map(|(_, &s)| s)
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut data = vec![0.0; outer * inner];
        let src = va.data();
        for o in 0..outer {
            for k in 0..axis_len {
                for i in 0..inner {
                    data[o * inner + i] += src[(o * axis_len + k) * inner + i];
                }
            }
        }
        let value = Tensor::from_vec(&out_shape, data);
        let needs = self.needs(a);
        self.push_checked(value, Op::SumAxis { x: a, axis }, needs, "sum_axis")
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let va = self.value(a);
        let value = Tensor::scalar(va.data().iter().sum());
        let needs = self.needs(a);
        self.push_checked(value, Op::SumAll(a), needs, "sum_all")
    }

    /// Row lookup into a `[rows, d]` matrix; the embedding primitive.
    pub fn embed(&mut self, table: NodeId, index: usize) -> Result<NodeId, AdError> {
        let vt = self.value(table);
        if vt.shape().len() != 2 || index >= vt.shape()[0] {
            return Err(AdError::ShapeMismatch {
                op: "embed",
                detail: format!("row {} of {:?}", index, vt.shape()),
            });
        }
        let (_, d) = vt.dims2();
        let data = vt.data()[index * d..(index + 1) * d].to_vec();
        let value = Tensor::from_vec(&[d], data);
        let needs = self.needs(table);
        self.push_checked(value, Op::Embed { table, index }, needs, "embed")
    }

    /// `-ln(dist[index])`: the cross-entropy contribution of one target
    /// under a probability vector.
    pub fn neg_log_prob(&mut self, dist: NodeId, index: usize) -> Result<NodeId, AdError> {
        let vd = self.value(dist);
        if vd.shape().len() != 1 || index >= vd.len() {
            return Err(AdError::ShapeMismatch {
                op: "neg_log_prob",
                detail: format!("index {} of {:?}", index, vd.shape()),
            });
        }
        let value = Tensor::scalar(-vd.data()[index].ln());
        let needs = self.needs(dist);
        self.push_checked(value, Op::NegLogProb { dist, index }, needs, "neg_log_prob")
    }

    /// Inverted dropout: on a training tape, zero each element with
    /// probability `p` and scale survivors by `1/(1-p)`; identity otherwise.
    pub fn dropout(&mut self, a: NodeId, p: f64) -> Result<NodeId, AdError> {
        if !self.train || p <= 0.0 {
            return Ok(a);
        }
        if p >= 1.0 {
            return Err(AdError::Invalid(format!("dropout probability {} out of range", p)));
        }
        let keep_scale = 1.0 / (1.0 - p);
        let len = self.value(a).len();
        let mask: Vec<f64> = (0..len)
            .map(|_| if self.rng.gen_range(0.0..1.0) < p { 0.0 } else { keep_scale })
            .collect();
        let va = self.value(a);
        let data = va.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::from_vec(va.shape(), data);
        let needs = self.needs(a);
        self.push_checked(value, Op::Dropout { x: a, mask }, needs, "dropout")
    }

    fn sweep_add(&self, sweep: &mut [Option<Tensor>], id: NodeId, contrib: &[f64]) {
        let node = &self.nodes[id.0];
        if !node.needs_grad {
            return;
        }
        let grad = sweep[id.0].get_or_insert_with(|| Tensor::zeros(node.value.shape()));
        debug_assert_eq!(grad.len(), contrib.len());
        for (g, c) in grad.data_mut().iter_mut().zip(contrib) {
            *g += c;
        }
    }

    fn sweep_add_at(&self, sweep: &mut [Option<Tensor>], id: NodeId, offset: usize, contrib: &[f64]) {
        let node = &self.nodes[id.0];
        if !node.needs_grad {
            return;
        }
        let grad = sweep[id.0].get_or_insert_with(|| Tensor::zeros(node.value.shape()));
        for (k, c) in contrib.iter().enumerate() {
            grad.data_mut()[offset + k] += c;
        }
    }

    /// Reverse-mode sweep from a scalar loss. Each sweep propagates one unit
    /// of upstream gradient and adds its result into the per-node
    /// accumulators, so calling backward again without resetting accumulates
    /// another gradient's worth.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AdError> {
        if !self.value(loss).is_scalar() {
            return Err(AdError::NonScalarLoss { len: self.value(loss).len() });
        }
        let mut sweep: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        self.sweep_add(&mut sweep, loss, &[1.0]);
        for idx in (0..=loss.0).rev() {
            let g = match sweep[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[idx].op.clone();
            let gd = g.data();
            match op {
                Op::Leaf | Op::Param => {}
                Op::Add(a, b) => {
                    self.sweep_add(&mut sweep, a, gd);
                    self.sweep_add(&mut sweep, b, gd);
                }
                Op::AddBias(mat, bias) => {
                    self.sweep_add(&mut sweep, mat, gd);
                    let (rows, cols) = self.nodes[mat.0].value.dims2();
                    let mut bias_grad = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            bias_grad[c] += gd[r * cols + c];
                        }
                    }
                    self.sweep_add(&mut sweep, bias, &bias_grad);
                }
                Op::Mul(a, b) => {
                    let ca: Vec<f64> = gd
                        .iter()
                        .zip(self.nodes[b.0].value.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    let cb: Vec<f64> = gd
                        .iter()
                        .zip(self.nodes[a.0].value.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    self.sweep_add(&mut sweep, a, &ca);
                    self.sweep_add(&mut sweep, b, &cb);
                }
                Op::Scale(a, k) => {
                    let ca: Vec<f64> = gd.iter().map(|g| g * k).collect();
                    self.sweep_add(&mut sweep, a, &ca);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.nodes[a.0].value.dims2();
                    let (_, n) = self.nodes[b.0].value.dims2();
                    let ad = self.nodes[a.0].value.data();
                    let bd = self.nodes[b.0].value.data();
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = gd[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                ga[i * k + p] += gij * bd[p * n + j];
                            }
                        }
                    }
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += aip * gd[i * n + j];
                            }
                        }
                    }
                    self.sweep_add(&mut sweep, a, &ga);
                    self.sweep_add(&mut sweep, b, &gb);
                }
                Op::MatVec(a, v) => {
                    let (m, k) = self.nodes[a.0].value.dims2();
                    let ad = self.nodes[a.0].value.data();
                    let vd = self.nodes[v.0].value.data();
                    let mut ga = vec![0.0; m * k];
                    let mut gv = vec![0.0; k];
                    for i in 0..m {
                        let gi = gd[i];
                        if gi == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            ga[i * k + p] += gi * vd[p];
                            gv[p] += gi * ad[i * k + p];
                        }
                    }
                    self.sweep_add(&mut sweep, a, &ga);
                    self.sweep_add(&mut sweep, v, &gv);
                }
                Op::Concat { parts, axis } => {
                    let out_shape = self.nodes[idx].value.shape().to_vec();
                    let (outer, out_axis, inner) = lanes(&out_shape, axis);
                    let mut offset = 0;
                    for &p in &parts {
                        let part_axis = self.nodes[p.0].value.shape()[axis];
                        let mut contrib = vec![0.0; outer * part_axis * inner];
                        for o in 0..outer {
                            for k in 0..part_axis {
                                let src = (o * out_axis + offset + k) * inner;
                                let dst = (o * part_axis + k) * inner;
                                contrib[dst..dst + inner].copy_from_slice(&gd[src..src + inner]);
                            }
                        }
                        self.sweep_add(&mut sweep, p, &contrib);
                        offset += part_axis;
                    }
                }
                Op::Reshape(a) => {
                    self.sweep_add(&mut sweep, a, gd);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[idx].value.data();
                    let ca: Vec<f64> =
                        gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    self.sweep_add(&mut sweep, a, &ca);
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[idx].value.data();
                    let ca: Vec<f64> =
                        gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    self.sweep_add(&mut sweep, a, &ca);
                }
                Op::Softmax { x, axis } => {
                    let y = self.nodes[idx].value.data();
                    let shape = self.nodes[idx].value.shape().to_vec();
                    let (outer, axis_len, inner) = lanes(&shape, axis);
                    let mut contrib = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * axis_len * inner + i;
                            let mut dot = 0.0;
                            for k in 0..axis_len {
                                let at = base + k * inner;
                                dot += gd[at] * y[at];
                            }
                            for k in 0..axis_len {
                                let at = base + k * inner;
                                contrib[at] = y[at] * (gd[at] - dot);
                            }
                        }
                    }
                    self.sweep_add(&mut sweep, x, &contrib);
                }
                Op::SumAxis { x, axis } => {
                    let in_shape = self.nodes[x.0].value.shape().to_vec();
                    let (outer, axis_len, inner) = lanes(&in_shape, axis);
                    let mut contrib = vec![0.0; outer * axis_len * inner];
                    for o in 0..outer {
                        for k in 0..axis_len {
                            for i in 0..inner {
                                contrib[(o * axis_len + k) * inner + i] = gd[o * inner + i];
                            }
                        }
                    }
                    self.sweep_add(&mut sweep, x, &contrib);
                }
                Op::SumAll(a) => {
                    let contrib = vec![gd[0]; self.nodes[a.0].value.len()];
                    self.sweep_add(&mut sweep, a, &contrib);
                }
                Op::Embed { table, index } => {
                    let d = gd.len();
                    self.sweep_add_at(&mut sweep, table, index * d, gd);
                }
                Op::NegLogProb { dist, index } => {
                    let p = self.nodes[dist.0].value.data()[index];
                    self.sweep_add_at(&mut sweep, dist, index, &[-gd[0] / p]);
                }
                Op::Dropout { x, mask } => {
                    let contrib: Vec<f64> =
                        gd.iter().zip(&mask).map(|(g, m)| g * m).collect();
                    self.sweep_add(&mut sweep, x, &contrib);
                }
            }
            // fold this sweep's gradient into the persistent accumulator
            let node = &mut self.nodes[idx];
            let acc = node
                .grad
                .get_or_insert_with(|| Tensor::zeros(node.value.shape()));
            for (dst, src) in acc.data_mut().iter_mut().zip(g.data()) {
                *dst += src;
            }
        }
        Ok(())
    }

    /// The node a parameter was leafed into, if it entered this graph.
    pub fn param_node(&self, id: ParamId) -> Option<NodeId> {
        self.param_nodes.get(&id.index()).copied()
    }

    /// Add this tape's parameter gradients into the shared accumulators.
    pub fn add_grads_to(&self, params: &mut Params) {
        for (&pidx, &node) in &self.param_nodes {
            if let Some(g) = self.grad(node) {
                let acc = params.grad_mut(ParamId(pidx));
                for (dst, src) in acc.data_mut().iter_mut().zip(g.data()) {
                    *dst += src;
                }
            }
        }
    }
}

/// Index of the maximum element, ties broken toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draw an index from a probability vector using the tape-style inverse CDF.
pub fn sample_index(dist: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}
