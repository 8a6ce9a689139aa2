//! Reverse-mode automatic differentiation over a linear operation tape.
//!
//! Every forward op appends one node; nodes are therefore already in
//! topological order and a single reverse sweep propagates gradients to all
//! trainable leaves. Any op that produces a non-finite value fails
//! immediately instead of propagating NaN/Inf.

use std::ops::Range;

use super::error::DiffError;
use super::tensor::{ParamSet, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Neg(NodeId),
    Scale(NodeId, f32),
    AddScalar(NodeId),
    Clamp(NodeId, f32, f32),
    Sum(NodeId, Option<usize>),
    Mean(NodeId, Option<usize>),
    Concat(Vec<NodeId>, usize),
    Slice(NodeId, usize, Range<usize>),
    Reshape(NodeId),
    /// Per-row sums of the stable binary cross-entropy between `targets`
    /// and `sigmoid(logits)`.
    BceWithLogits { logits: NodeId, targets: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradient map produced by [`Tape::backward`], keyed by node id.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f32]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Vec<f32>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// Linear record of forward operations with enough information to run one
/// reverse sweep. Consumed by [`Tape::backward`].
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a node. Valid until the tape is consumed by `backward`.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Inserts a leaf holding a copy of `tensor`. The leaf tracks gradients
    /// iff the tensor requires them and `trainable` is set.
    pub fn leaf(&mut self, tensor: &Tensor, trainable: bool) -> NodeId {
        let needs = trainable && tensor.requires_grad();
        self.push(tensor.clone(), Op::Leaf, needs)
    }

    /// Inserts a constant leaf (never receives gradients).
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.push(tensor, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn finish_op(
        &mut self,
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f32>,
        op: Op,
        needs_grad: bool,
    ) -> Result<NodeId, DiffError> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite { op: op_name });
        }
        let value = Tensor::from_vec(shape, data)?;
        Ok(self.push(value, op, needs_grad))
    }

    // ---- forward ops ------------------------------------------------------

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (m, ka) = self.value(a).dims2()?;
        let (kb, n) = self.value(b).dims2()?;
        if ka != kb {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0f32; m * n];
        matmul_nn(self.value(a).data(), self.value(b).data(), m, ka, n, &mut out);
        let needs = self.needs(a) || self.needs(b);
        self.finish_op("matmul", vec![m, n], out, Op::Matmul(a, b), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.unary("sigmoid", x, sigmoid_f32, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.unary("tanh", x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.unary("exp", x, |v| v.exp(), Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.unary("log", x, |v| v.ln(), Op::Log(x))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.unary("square", x, |v| v * v, Op::Square(x))
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.unary("neg", x, |v| -v, Op::Neg(x))
    }

    pub fn scale(&mut self, x: NodeId, factor: f32) -> Result<NodeId, DiffError> {
        self.unary("scale", x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f32) -> Result<NodeId, DiffError> {
        self.unary("add_scalar", x, |v| v + c, Op::AddScalar(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f32, hi: f32) -> Result<NodeId, DiffError> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(DiffError::Invalid(format!("clamp bounds [{lo}, {hi}]")));
        }
        self.unary("clamp", x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    /// Sum over `axis`, or over all elements when `axis` is `None`.
    pub fn sum(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId, DiffError> {
        self.reduce("sum", x, axis, false)
    }

    /// Mean over `axis`, or over all elements when `axis` is `None`.
    pub fn mean(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId, DiffError> {
        self.reduce("mean", x, axis, true)
    }

    /// Concatenates rank-1 tensors along axis 0 or rank-2 tensors along
    /// axis 0 or 1.
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::Invalid("concat of zero tensors".into()));
        }
        let rank = self.value(parts[0]).rank();
        if axis >= rank.max(1) {
            return Err(DiffError::InvalidAxis { op: "concat", axis, rank });
        }
        for &p in parts {
            if self.value(p).rank() != rank {
                return Err(DiffError::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let (shape, data) = if rank == 1 {
            let total: usize = parts.iter().map(|&p| self.value(p).numel()).sum();
            let mut data = Vec::with_capacity(total);
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            (vec![total], data)
        } else {
            let first = self.shape(parts[0]).to_vec();
            if axis == 0 {
                let cols = first[1];
                let mut rows = 0;
                for &p in parts {
                    let s = self.shape(p);
                    if s[1] != cols {
                        return Err(DiffError::ShapeMismatch {
                            op: "concat",
                            lhs: first.clone(),
                            rhs: s.to_vec(),
                        });
                    }
                    rows += s[0];
                }
                let mut data = Vec::with_capacity(rows * cols);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                (vec![rows, cols], data)
            } else {
                let rows = first[0];
                let mut cols = 0;
                for &p in parts {
                    let s = self.shape(p);
                    if s[0] != rows {
                        return Err(DiffError::ShapeMismatch {
                            op: "concat",
                            lhs: first.clone(),
                            rhs: s.to_vec(),
                        });
                    }
                    cols += s[1];
                }
                let mut out = vec![0.0f32; rows * cols];
                let mut col_off = 0;
                for &p in parts {
                    let s = self.shape(p)[1];
                    let src = self.value(p).data();
                    for r in 0..rows {
                        out[r * cols + col_off..r * cols + col_off + s]
                            .copy_from_slice(&src[r * s..(r + 1) * s]);
                    }
                    col_off += s;
                }
                (vec![rows, cols], out)
            }
        };
        let needs = parts.iter().any(|&p| self.needs(p));
        self.finish_op("concat", shape, data, Op::Concat(parts.to_vec(), axis), needs)
    }

    /// A contiguous range along one axis of a rank-1 or rank-2 tensor.
    pub fn slice(&mut self, x: NodeId, axis: usize, range: Range<usize>) -> Result<NodeId, DiffError> {
        let shape = self.shape(x).to_vec();
        let rank = shape.len();
        if axis >= rank {
            return Err(DiffError::InvalidAxis { op: "slice", axis, rank });
        }
        if range.start >= range.end || range.end > shape[axis] {
            return Err(DiffError::Invalid(format!(
                "slice {range:?} out of bounds for axis {axis} of {shape:?}"
            )));
        }
        let src = self.value(x).data();
        let (out_shape, data) = match (rank, axis) {
            (1, 0) => (vec![range.len()], src[range.clone()].to_vec()),
            (2, 0) => {
                let cols = shape[1];
                (vec![range.len(), cols], src[range.start * cols..range.end * cols].to_vec())
            }
            (2, 1) => {
                let (rows, cols) = (shape[0], shape[1]);
                let w = range.len();
                let mut data = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    data.extend_from_slice(&src[r * cols + range.start..r * cols + range.end]);
                }
                (vec![rows, w], data)
            }
            _ => return Err(DiffError::Invalid(format!("slice unsupported for shape {shape:?}"))),
        };
        let needs = self.needs(x);
        self.finish_op("slice", out_shape, data, Op::Slice(x, axis, range), needs)
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, DiffError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(DiffError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        let data = self.value(x).data().to_vec();
        let needs = self.needs(x);
        self.finish_op("reshape", shape, data, Op::Reshape(x), needs)
    }

    /// Row sums of the numerically stable binary cross-entropy
    /// `softplus(logit) - logit * target` (targets in `[0,1]`).
    /// Shapes `[B,n] -> [B]`.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: NodeId) -> Result<NodeId, DiffError> {
        let lshape = self.shape(logits).to_vec();
        if lshape != self.shape(targets) {
            return Err(DiffError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: lshape,
                rhs: self.shape(targets).to_vec(),
            });
        }
        if lshape.len() != 2 {
            return Err(DiffError::Invalid(format!(
                "bce_with_logits expects rank-2 input, got {lshape:?}"
            )));
        }
        let (rows, cols) = (lshape[0], lshape[1]);
        let l = self.value(logits).data();
        let t = self.value(targets).data();
        let mut out = vec![0.0f32; rows];
        for r in 0..rows {
            let mut acc = 0.0f64;
            for c in 0..cols {
                let idx = r * cols + c;
                acc += softplus_f64(l[idx] as f64) - (l[idx] as f64) * (t[idx] as f64);
            }
            out[r] = acc as f32;
        }
        let needs = self.needs(logits) || self.needs(targets);
        self.finish_op("bce_with_logits", vec![rows], out, Op::BceWithLogits { logits, targets }, needs)
    }

    // ---- shared helpers ---------------------------------------------------

    fn unary(
        &mut self,
        name: &'static str,
        x: NodeId,
        f: impl Fn(f32) -> f32,
        op: Op,
    ) -> Result<NodeId, DiffError> {
        let data: Vec<f32> = self.value(x).data().iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.finish_op(name, shape, data, op, needs)
    }

    fn binary_elementwise(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f32, f32) -> f32,
        op: Op,
    ) -> Result<NodeId, DiffError> {
        let pair = classify_broadcast(self.shape(a), self.shape(b)).ok_or_else(|| {
            DiffError::ShapeMismatch { op: name, lhs: self.shape(a).to_vec(), rhs: self.shape(b).to_vec() }
        })?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let (shape, data) = match pair {
            Broadcast::Equal => {
                let data = av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect();
                (self.shape(a).to_vec(), data)
            }
            Broadcast::RhsRow { rows, cols } => {
                let mut data = vec![0.0f32; rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        data[r * cols + c] = f(av[r * cols + c], bv[c]);
                    }
                }
                (self.shape(a).to_vec(), data)
            }
            Broadcast::LhsRow { rows, cols } => {
                let mut data = vec![0.0f32; rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        data[r * cols + c] = f(av[c], bv[r * cols + c]);
                    }
                }
                (self.shape(b).to_vec(), data)
            }
        };
        let needs = self.needs(a) || self.needs(b);
        self.finish_op(name, shape, data, op, needs)
    }

    fn reduce(
        &mut self,
        name: &'static str,
        x: NodeId,
        axis: Option<usize>,
        mean: bool,
    ) -> Result<NodeId, DiffError> {
        let shape = self.shape(x).to_vec();
        let rank = shape.len();
        let src = self.value(x).data();
        let (out_shape, mut data) = match axis {
            None => {
                let mut acc = 0.0f64;
                for &v in src {
                    acc += v as f64;
                }
                (vec![], vec![acc as f32])
            }
            Some(ax) => {
                if ax >= rank {
                    return Err(DiffError::InvalidAxis { op: name, axis: ax, rank });
                }
                match (rank, ax) {
                    (1, 0) => {
                        let mut acc = 0.0f64;
                        for &v in src {
                            acc += v as f64;
                        }
                        (vec![], vec![acc as f32])
                    }
                    (2, 0) => {
                        let (rows, cols) = (shape[0], shape[1]);
                        let mut acc = vec![0.0f64; cols];
                        for r in 0..rows {
                            for c in 0..cols {
                                acc[c] += src[r * cols + c] as f64;
                            }
                        }
                        (vec![cols], acc.iter().map(|&v| v as f32).collect())
                    }
                    (2, 1) => {
                        let (rows, cols) = (shape[0], shape[1]);
                        let mut out = vec![0.0f32; rows];
                        for r in 0..rows {
                            let mut acc = 0.0f64;
                            for c in 0..cols {
                                acc += src[r * cols + c] as f64;
                            }
                            out[r] = acc as f32;
                        }
                        (vec![rows], out)
                    }
                    _ => {
                        return Err(DiffError::Invalid(format!(
                            "{name} unsupported for shape {shape:?} axis {ax}"
                        )))
                    }
                }
            }
        };
        if mean {
            let n = reduced_count(&shape, axis) as f32;
            for v in data.iter_mut() {
                *v /= n;
            }
        }
        let needs = self.needs(x);
        let op = if mean { Op::Mean(x, axis) } else { Op::Sum(x, axis) };
        self.finish_op(name, out_shape, data, op, needs)
    }

    // ---- backward ---------------------------------------------------------

    /// Runs one reverse sweep from a scalar loss and consumes the tape.
    ///
    /// Every trainable leaf reachable from the loss receives its gradient in
    /// the returned map.
    pub fn backward(self, loss: NodeId) -> Result<Gradients, DiffError> {
        let nodes = self.nodes;
        let loss_node = &nodes[loss.0];
        if !loss_node.value.is_scalar() {
            return Err(DiffError::NonScalarLoss { shape: loss_node.value.shape().to_vec() });
        }
        if !loss_node.needs_grad {
            return Err(DiffError::DetachedGraph);
        }

        let mut grads: Vec<Option<Vec<f32>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {
                    // keep the accumulated gradient for the caller
                    grads[i] = Some(g);
                }
                Op::Matmul(a, b) => {
                    let (m, k) = nodes[a.0].value.dims2().unwrap();
                    let n = nodes[b.0].value.dims2().unwrap().1;
                    if nodes[a.0].needs_grad {
                        let mut ga = vec![0.0f32; m * k];
                        matmul_nt(&g, nodes[b.0].value.data(), m, n, k, &mut ga);
                        accumulate(&mut grads, a.0, &ga);
                    }
                    if nodes[b.0].needs_grad {
                        let mut gb = vec![0.0f32; k * n];
                        matmul_tn(nodes[a.0].value.data(), &g, m, k, n, &mut gb);
                        accumulate(&mut grads, b.0, &gb);
                    }
                }
                Op::Add(a, b) => {
                    backprop_linear(&nodes, &mut grads, *a, &g, 1.0);
                    backprop_linear(&nodes, &mut grads, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    backprop_linear(&nodes, &mut grads, *a, &g, 1.0);
                    backprop_linear(&nodes, &mut grads, *b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    if nodes[a.0].needs_grad {
                        let scaled = mul_with_broadcast(&nodes, *b, &g, node.value.shape());
                        backprop_linear(&nodes, &mut grads, *a, &scaled, 1.0);
                    }
                    if nodes[b.0].needs_grad {
                        let scaled = mul_with_broadcast(&nodes, *a, &g, node.value.shape());
                        backprop_linear(&nodes, &mut grads, *b, &scaled, 1.0);
                    }
                }
                Op::Relu(x) => {
                    if nodes[x.0].needs_grad {
                        let inp = nodes[x.0].value.data();
                        let gx: Vec<f32> = g
                            .iter()
                            .zip(inp)
                            .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                            .collect();
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Sigmoid(x) => {
                    if nodes[x.0].needs_grad {
                        let y = node.value.data();
                        let gx: Vec<f32> =
                            g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (1.0 - yv)).collect();
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Tanh(x) => {
                    if nodes[x.0].needs_grad {
                        let y = node.value.data();
                        let gx: Vec<f32> =
                            g.iter().zip(y).map(|(&gv, &yv)| gv * (1.0 - yv * yv)).collect();
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Exp(x) => {
                    if nodes[x.0].needs_grad {
                        let y = node.value.data();
                        let gx: Vec<f32> = g.iter().zip(y).map(|(&gv, &yv)| gv * yv).collect();
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Log(x) => {
                    if nodes[x.0].needs_grad {
                        let inp = nodes[x.0].value.data();
                        let gx: Vec<f32> = g.iter().zip(inp).map(|(&gv, &xv)| gv / xv).collect();
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Square(x) => {
                    if nodes[x.0].needs_grad {
                        let inp = nodes[x.0].value.data();
                        let gx: Vec<f32> = g.iter().zip(inp).map(|(&gv, &xv)| gv * 2.0 * xv).collect();
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Neg(x) => backprop_linear(&nodes, &mut grads, *x, &g, -1.0),
                Op::Scale(x, factor) => backprop_linear(&nodes, &mut grads, *x, &g, *factor),
                Op::AddScalar(x) => backprop_linear(&nodes, &mut grads, *x, &g, 1.0),
                Op::Clamp(x, lo, hi) => {
                    if nodes[x.0].needs_grad {
                        let inp = nodes[x.0].value.data();
                        let gx: Vec<f32> = g
                            .iter()
                            .zip(inp)
                            .map(|(&gv, &xv)| if xv > *lo && xv < *hi { gv } else { 0.0 })
                            .collect();
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Sum(x, axis) => {
                    if nodes[x.0].needs_grad {
                        let gx = spread(&g, nodes[x.0].value.shape(), *axis, 1.0);
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Mean(x, axis) => {
                    if nodes[x.0].needs_grad {
                        let n = reduced_count(nodes[x.0].value.shape(), *axis) as f32;
                        let gx = spread(&g, nodes[x.0].value.shape(), *axis, 1.0 / n);
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Concat(parts, axis) => {
                    let out_shape = node.value.shape().to_vec();
                    let mut offset = 0;
                    for &p in parts {
                        let pshape = nodes[p.0].value.shape().to_vec();
                        let extent = pshape[*axis];
                        if nodes[p.0].needs_grad {
                            let gp = gather_concat_part(&g, &out_shape, &pshape, *axis, offset);
                            accumulate(&mut grads, p.0, &gp);
                        }
                        offset += extent;
                    }
                }
                Op::Slice(x, axis, range) => {
                    if nodes[x.0].needs_grad {
                        let gx = scatter_slice(&g, nodes[x.0].value.shape(), *axis, range.clone());
                        accumulate(&mut grads, x.0, &gx);
                    }
                }
                Op::Reshape(x) => {
                    if nodes[x.0].needs_grad {
                        accumulate(&mut grads, x.0, &g);
                    }
                }
                Op::BceWithLogits { logits, targets } => {
                    let lshape = nodes[logits.0].value.shape().to_vec();
                    let (rows, cols) = (lshape[0], lshape[1]);
                    let l = nodes[logits.0].value.data();
                    let t = nodes[targets.0].value.data();
                    if nodes[logits.0].needs_grad {
                        let mut gl = vec![0.0f32; rows * cols];
                        for r in 0..rows {
                            for c in 0..cols {
                                let idx = r * cols + c;
                                gl[idx] = g[r] * (sigmoid_f32(l[idx]) - t[idx]);
                            }
                        }
                        accumulate(&mut grads, logits.0, &gl);
                    }
                    if nodes[targets.0].needs_grad {
                        let mut gt = vec![0.0f32; rows * cols];
                        for r in 0..rows {
                            for c in 0..cols {
                                let idx = r * cols + c;
                                gt[idx] = -g[r] * l[idx];
                            }
                        }
                        accumulate(&mut grads, targets.0, &gt);
                    }
                }
            }
        }

        Ok(Gradients { grads })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Registers all parameters of a set as leaves, in declaration order.
pub fn register_params(tape: &mut Tape, params: &ParamSet, trainable: bool) -> Vec<NodeId> {
    params.iter().map(|(_, t)| tape.leaf(t, trainable)).collect()
}

/// Writes gradients from a backward pass into each parameter's `grad` slot.
/// Parameters that received no gradient get zeros.
pub fn load_grads(params: &mut ParamSet, ids: &[NodeId], grads: &Gradients) -> Result<(), DiffError> {
    assert_eq!(params.len(), ids.len(), "parameter/id count mismatch");
    for (idx, &id) in ids.iter().enumerate() {
        let t = params.tensor_mut(idx);
        match grads.get(id) {
            Some(g) => t.set_grad(g.to_vec())?,
            None => t.set_grad(vec![0.0; t.numel()])?,
        }
    }
    Ok(())
}

// ---- data-level helpers ----------------------------------------------------

enum Broadcast {
    Equal,
    /// rhs has shape `[n]` or `[1,n]`, lhs `[rows, cols]`.
    RhsRow { rows: usize, cols: usize },
    /// lhs has shape `[n]` or `[1,n]`, rhs `[rows, cols]`.
    LhsRow { rows: usize, cols: usize },
}

fn row_vector_len(shape: &[usize]) -> Option<usize> {
    match shape {
        [n] => Some(*n),
        [1, n] => Some(*n),
        _ => None,
    }
}

fn classify_broadcast(lhs: &[usize], rhs: &[usize]) -> Option<Broadcast> {
    if lhs == rhs {
        return Some(Broadcast::Equal);
    }
    if lhs.len() == 2 {
        if let Some(n) = row_vector_len(rhs) {
            if n == lhs[1] {
                return Some(Broadcast::RhsRow { rows: lhs[0], cols: lhs[1] });
            }
        }
    }
    if rhs.len() == 2 {
        if let Some(n) = row_vector_len(lhs) {
            if n == rhs[1] {
                return Some(Broadcast::LhsRow { rows: rhs[0], cols: rhs[1] });
            }
        }
    }
    None
}

fn accumulate(grads: &mut [Option<Vec<f32>>], idx: usize, delta: &[f32]) {
    match &mut grads[idx] {
        Some(g) => {
            for (gv, &dv) in g.iter_mut().zip(delta) {
                *gv += dv;
            }
        }
        None => grads[idx] = Some(delta.to_vec()),
    }
}

/// Adds `factor * g` (reduced over the batch axis when the target was
/// broadcast) to the gradient of `target`.
fn backprop_linear(nodes: &[Node], grads: &mut [Option<Vec<f32>>], target: NodeId, g: &[f32], factor: f32) {
    if !nodes[target.0].needs_grad {
        return;
    }
    let tshape = nodes[target.0].value.shape();
    let tlen = nodes[target.0].value.numel();
    if tlen == g.len() {
        if factor == 1.0 {
            accumulate(grads, target.0, g);
        } else {
            let scaled: Vec<f32> = g.iter().map(|&v| v * factor).collect();
            accumulate(grads, target.0, &scaled);
        }
        return;
    }
    // target was a broadcast row vector: sum the gradient over rows
    let cols = row_vector_len(tshape).expect("broadcast target must be a row vector");
    let rows = g.len() / cols;
    let mut reduced = vec![0.0f32; cols];
    for r in 0..rows {
        for c in 0..cols {
            reduced[c] += g[r * cols + c];
        }
    }
    if factor != 1.0 {
        for v in reduced.iter_mut() {
            *v *= factor;
        }
    }
    accumulate(grads, target.0, &reduced);
}

/// Elementwise product of the upstream gradient with the (possibly
/// broadcast) value of `other`, in the output shape.
fn mul_with_broadcast(nodes: &[Node], other: NodeId, g: &[f32], out_shape: &[usize]) -> Vec<f32> {
    let ov = nodes[other.0].value.data();
    if ov.len() == g.len() {
        return g.iter().zip(ov).map(|(&gv, &xv)| gv * xv).collect();
    }
    let cols = row_vector_len(nodes[other.0].value.shape()).expect("broadcast operand");
    let rows = out_shape[0];
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = g[r * cols + c] * ov[c];
        }
    }
    out
}

fn reduced_count(shape: &[usize], axis: Option<usize>) -> usize {
    match axis {
        None => shape.iter().product::<usize>().max(1),
        Some(ax) => match shape.len() {
            1 => shape[0],
            2 => shape[ax],
            _ => unreachable!(),
        },
    }
}

/// Broadcasts the gradient of a reduction back to the input shape.
fn spread(g: &[f32], in_shape: &[usize], axis: Option<usize>, factor: f32) -> Vec<f32> {
    let numel: usize = in_shape.iter().product();
    match axis {
        None => vec![g[0] * factor; numel],
        Some(ax) => match (in_shape.len(), ax) {
            (1, 0) => vec![g[0] * factor; numel],
            (2, 0) => {
                let (rows, cols) = (in_shape[0], in_shape[1]);
                let mut out = vec![0.0f32; numel];
                for r in 0..rows {
                    for c in 0..cols {
                        out[r * cols + c] = g[c] * factor;
                    }
                }
                out
            }
            (2, 1) => {
                let (rows, cols) = (in_shape[0], in_shape[1]);
                let mut out = vec![0.0f32; numel];
                for r in 0..rows {
                    for c in 0..cols {
                        out[r * cols + c] = g[r] * factor;
                    }
                }
                out
            }
            _ => unreachable!(),
        },
    }
}

fn gather_concat_part(
    g: &[f32],
    out_shape: &[usize],
    part_shape: &[usize],
    axis: usize,
    offset: usize,
) -> Vec<f32> {
    if out_shape.len() == 1 {
        let n = part_shape[0];
        return g[offset..offset + n].to_vec();
    }
    let cols = out_shape[1];
    if axis == 0 {
        let n = part_shape[0];
        g[offset * cols..(offset + n) * cols].to_vec()
    } else {
        let rows = out_shape[0];
        let w = part_shape[1];
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&g[r * cols + offset..r * cols + offset + w]);
        }
        out
    }
}

fn scatter_slice(g: &[f32], in_shape: &[usize], axis: usize, range: Range<usize>) -> Vec<f32> {
    let numel: usize = in_shape.iter().product();
    let mut out = vec![0.0f32; numel];
    match (in_shape.len(), axis) {
        (1, 0) => out[range.clone()].copy_from_slice(g),
        (2, 0) => {
            let cols = in_shape[1];
            out[range.start * cols..range.end * cols].copy_from_slice(g);
        }
        (2, 1) => {
            let (rows, cols) = (in_shape[0], in_shape[1]);
            let w = range.len();
            for r in 0..rows {
                out[r * cols + range.start..r * cols + range.end]
                    .copy_from_slice(&g[r * w..(r + 1) * w]);
            }
        }
        _ => unreachable!(),
    }
    out
}

pub(crate) fn sigmoid_f32(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus_f64(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `out += a[m,k] @ b[k,n]`, row-major.
pub(crate) fn matmul_nn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[kk * n..(kk + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
    }
}

/// `out += g[m,n] @ b^T[n,k]` where `b` is stored `[k,n]`.
fn matmul_nt(g: &[f32], b: &[f32], m: usize, n: usize, k: usize, out: &mut [f32]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut acc = 0.0f32;
            for j in 0..n {
                acc += grow[j] * brow[j];
            }
            orow[kk] += acc;
        }
    }
}

/// `out += a^T[k,m] @ g[m,n]` where `a` is stored `[m,k]`.
fn matmul_tn(a: &[f32], g: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let orow = &mut out[kk * n..(kk + 1) * n];
                for j in 0..n {
                    orow[j] += av * grow[j];
                }
            }
        }
    }
}
