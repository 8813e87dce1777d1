//! Reverse-mode automatic differentiation over [`Tensor4`] values.
//!
//! Every operation appends a node holding its output value and enough
//! information to run its backward rule. Nodes are only ever appended, so
//! the node list is already in topological order and `backward` is a single
//! reverse sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{shape_err, Error, Result};
use crate::loss;
use crate::ops::{conv, elementwise, pool, resize, softmax};
use crate::tensor::{Shape, Tensor4};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a particular [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: (usize, usize),
    pub dilation: usize,
}

impl ConvGeom {
    pub const fn new(stride: usize, pad: (usize, usize), dilation: usize) -> Self {
        Self { stride, pad, dilation }
    }

    /// Stride 1, dilation 1, padding that keeps spatial size for odd kernels.
    pub const fn same(kh: usize, kw: usize) -> Self {
        Self::new(1, (kh / 2, kw / 2), 1)
    }
}

pub(crate) enum Op {
    Leaf,
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: ConvGeom,
    },
    AvgPool2x2 {
        x: usize,
    },
    GlobalAvgPool {
        x: usize,
    },
    GlobalMaxPool {
        x: usize,
        argmax: Vec<usize>,
    },
    ChannelMean {
        x: usize,
    },
    ChannelMax {
        x: usize,
        argmax: Vec<usize>,
    },
    Resize {
        x: usize,
    },
    Relu {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Affine {
        x: usize,
        scale: f64,
    },
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Concat {
        inputs: Vec<usize>,
    },
    SoftmaxSpatial {
        x: usize,
    },
    Sum {
        x: usize,
    },
    WeightedBce {
        logits: usize,
        target: Tensor4,
        weight: Tensor4,
    },
    WeightedIou {
        logits: usize,
        target: Tensor4,
        weight: Tensor4,
    },
}

pub(crate) struct Node {
    pub(crate) value: Tensor4,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Recorded computation. One tape per forward pass.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    branch_hash: Option<u64>,
    conv_macs: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            branch_hash: None,
            conv_macs: 0,
        }
    }

    /// A tape that fingerprints every discrete decision taken during the
    /// forward pass (relu signs, max selections, probability clamps). Two
    /// passes with equal fingerprints evaluated the same smooth piece of the
    /// function.
    pub fn with_branch_tracking() -> Self {
        let mut t = Self::new();
        t.branch_hash = Some(0xcbf2_9ce4_8422_2325);
        t
    }

    pub fn branch_fingerprint(&self) -> Option<u64> {
        self.branch_hash
    }

    pub(crate) fn tracking_branches(&self) -> bool {
        self.branch_hash.is_some()
    }

    pub(crate) fn note_branch(&mut self, bits: u64) {
        if let Some(h) = self.branch_hash.as_mut() {
            // FNV-1a over the 8 bytes
            for b in bits.to_le_bytes() {
                *h ^= b as u64;
                *h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
    }

    /// Multiply-accumulates performed by convolutions recorded so far.
    pub fn conv_macs(&self) -> u64 {
        self.conv_macs
    }

    pub(crate) fn add_conv_macs(&mut self, macs: u64) {
        self.conv_macs += macs;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor4) -> Var {
        self.push_node(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor4) -> Var {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor4 {
        self.check(v).expect("variable belongs to another tape");
        &self.nodes[v.idx].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.idx].requires_grad
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Backward(format!(
                "variable #{} is not recorded on this tape",
                v.idx
            )));
        }
        Ok(())
    }

    pub(crate) fn node_value(&self, idx: usize) -> &Tensor4 {
        &self.nodes[idx].value
    }

    fn push_node(&mut self, value: Tensor4, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    /// Appends an op node; it needs a gradient if any of `inputs` does.
    pub(crate) fn push(&mut self, value: Tensor4, op: Op, inputs: &[usize]) -> Var {
        let rg = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push_node(value, op, rg)
    }

    /// Reverse sweep from a scalar. Returns gradients of every leaf the
    /// scalar depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id || loss.idx >= self.nodes.len() {
            return Err(Error::Backward(
                "tensor was not produced on this tape; nothing to differentiate".into(),
            ));
        }
        let s = self.nodes[loss.idx].value.shape();
        if s != Shape::scalar() {
            return shape_err("backward", format!("loss must have shape (1,1,1,1), got {s}"));
        }
        let mut grads: Vec<Option<Tensor4>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.idx].requires_grad {
            return Ok(Gradients { tape: self.id, grads });
        }
        grads[loss.idx] = Some(Tensor4::scalar(1.0));

        for idx in (0..=loss.idx).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &g, &mut grads);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn wants(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    fn backward_node(&self, idx: usize, g: &Tensor4, grads: &mut [Option<Tensor4>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let (dx, dw, db) = conv::backward(
                    self.node_value(*x),
                    self.node_value(*w),
                    g,
                    *geom,
                    self.wants(*x),
                    self.wants(*w),
                    b.is_some_and(|b| self.wants(b)),
                );
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    let db = db
                        .reshape(self.node_value(*b).shape())
                        .expect("bias length checked in forward");
                    accumulate(grads, *b, db);
                }
            }
            Op::AvgPool2x2 { x } => {
                let dx = pool::avg_pool2x2_backward(self.node_value(*x).shape(), g);
                accumulate(grads, *x, dx);
            }
            Op::GlobalAvgPool { x } => {
                let dx = pool::global_avg_pool_backward(self.node_value(*x).shape(), g);
                accumulate(grads, *x, dx);
            }
            Op::GlobalMaxPool { x, argmax } => {
                let dx = pool::global_max_pool_backward(self.node_value(*x).shape(), argmax, g);
                accumulate(grads, *x, dx);
            }
            Op::ChannelMean { x } => {
                let dx = pool::channel_mean_backward(self.node_value(*x).shape(), g);
                accumulate(grads, *x, dx);
            }
            Op::ChannelMax { x, argmax } => {
                let dx = pool::channel_max_backward(self.node_value(*x).shape(), argmax, g);
                accumulate(grads, *x, dx);
            }
            Op::Resize { x } => {
                let dx = resize::bilinear_backward(self.node_value(*x).shape(), g);
                accumulate(grads, *x, dx);
            }
            Op::Relu { x } => {
                accumulate(grads, *x, elementwise::relu_backward(out, g));
            }
            Op::Sigmoid { x } => {
                accumulate(grads, *x, elementwise::sigmoid_backward(out, g));
            }
            Op::Affine { x, scale } => {
                accumulate(grads, *x, g.map(|v| v * scale));
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    let da = elementwise::reduce_to(g, self.node_value(*a).shape());
                    accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let db = elementwise::reduce_to(g, self.node_value(*b).shape());
                    accumulate(grads, *b, db);
                }
            }
            Op::Mul { a, b } => {
                let av = self.node_value(*a);
                let bv = self.node_value(*b);
                if self.wants(*a) {
                    accumulate(grads, *a, elementwise::mul_backward(g, bv, av.shape()));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, elementwise::mul_backward(g, av, bv.shape()));
                }
            }
            Op::Concat { inputs } => {
                let shapes: Vec<Shape> = inputs.iter().map(|&i| self.node_value(i).shape()).collect();
                for (part, (&i, _)) in elementwise::split_channels(g, &shapes)
                    .into_iter()
                    .zip(inputs.iter().zip(&shapes))
                {
                    if self.wants(i) {
                        accumulate(grads, i, part);
                    }
                }
            }
            Op::SoftmaxSpatial { x } => {
                accumulate(grads, *x, softmax::softmax_spatial_backward(out, g));
            }
            Op::Sum { x } => {
                let s = self.node_value(*x).shape();
                accumulate(grads, *x, Tensor4::full(s, g.data()[0]));
            }
            Op::WeightedBce { logits, target, weight } => {
                let dz = loss::weighted_bce_backward(self.node_value(*logits), target, weight, g.data()[0]);
                accumulate(grads, *logits, dz);
            }
            Op::WeightedIou { logits, target, weight } => {
                let dz = loss::weighted_iou_backward(self.node_value(*logits), target, weight, g.data()[0]);
                accumulate(grads, *logits, dz);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor4>], idx: usize, g: Tensor4) {
    match &mut grads[idx] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients produced by [`Tape::backward`]; populated for leaves only.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor4>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor4> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor4> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.idx).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn random(shape: Shape, seed: u64) -> Tensor4 {
        let mut p = Prng::new(seed);
        Tensor4::from_fn(shape, |_, _, _, _| p.uniform(-1.0, 1.0))
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(random(Shape::new(1, 2, 3, 3), 1));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Tensor4::full(Shape::new(1, 2, 3, 3), 1.0));
    }

    #[test]
    fn grad_of_sum_of_squares_is_twice_x() {
        let xv = random(Shape::new(2, 1, 2, 3), 2);
        let mut t = Tape::new();
        let x = t.leaf(xv.clone());
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &xv.map(|v| 2.0 * v));
    }

    #[test]
    fn independent_branches_accumulate() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::full(Shape::new(1, 1, 2, 2), 3.0));
        let a = t.affine(x, 2.0, 0.0);
        let b = t.affine(x, 5.0, 1.0);
        let c = t.add(a, b).unwrap();
        let s = t.sum(c);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[7.0; 4]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::zeros(Shape::new(1, 1, 2, 2)));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn backward_rejects_foreign_variable() {
        let mut other = Tape::new();
        let v = other.leaf(Tensor4::scalar(1.0));
        let t = Tape::new();
        let err = t.backward(v).unwrap_err();
        assert!(err.to_string().contains("not produced on this tape"));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::full(Shape::new(1, 1, 1, 2), 1.0));
        let k = t.constant(Tensor4::full(Shape::new(1, 1, 1, 2), 4.0));
        let p = t.mul(x, k).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert!(g.get(k).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[4.0, 4.0]);
    }
}
