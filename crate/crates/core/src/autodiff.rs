//! Minimal reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] is built once from shape-checked primitive ops; named leaves
//! are bound at [`Graph::forward`] time, and [`Graph::backward`] walks the
//! tape in reverse, returning gradients for every leaf (zeros for leaves the
//! root does not depend on). Graphs are immutable after construction and both
//! passes are pure, so one graph can be evaluated repeatedly (and from
//! several threads) with different bindings.
//!
//! Subgradient conventions for kinks are fixed: `relu'(0) = 0`, `√'(0) = 0`,
//! and the step-like ops (`ReluStep`, `LeakyStep`) differentiate to zero
//! everywhere. This makes every backward pass a deterministic selection from
//! the subdifferential.

use crate::error::CoreError;
use crate::fp;
use crate::tensor::{mm_nn, mm_nt, mm_tn, Tensor};
use crate::Result;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub type NodeId = usize;

/// Elementwise primitives with a fixed derivative selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Relu,
    LeakyRelu { slope: f64 },
    Softplus { beta: f64 },
    /// `σ(βx)` — the derivative of softplus, itself differentiable.
    SigmoidScaled { beta: f64 },
    /// a.e.-derivative of relu; differentiates to zero.
    ReluStep,
    /// a.e.-derivative of leaky relu; differentiates to zero.
    LeakyStep { slope: f64 },
    /// `√max(x,0)`, with the derivative at 0 fixed to 0.
    SqrtGuarded,
}

impl UnaryFn {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryFn::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            UnaryFn::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            UnaryFn::Softplus { beta } => fp::softplus(x, beta),
            UnaryFn::SigmoidScaled { beta } => fp::sigmoid(beta * x),
            UnaryFn::ReluStep => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryFn::LeakyStep { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            UnaryFn::SqrtGuarded => {
                if x > 0.0 {
                    fp::sqrt(x)
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            UnaryFn::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryFn::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            UnaryFn::Softplus { beta } => fp::sigmoid(beta * x),
            UnaryFn::SigmoidScaled { beta } => {
                let s = fp::sigmoid(beta * x);
                beta * s * (1.0 - s)
            }
            UnaryFn::ReluStep | UnaryFn::LeakyStep { .. } => 0.0,
            UnaryFn::SqrtGuarded => {
                if x > 0.0 {
                    0.5 / fp::sqrt(x)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { name: String },
    Konst(Tensor),
    /// `a @ b`
    MatMul(NodeId, NodeId),
    /// `a^T @ b`
    MatMulTN(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Hadamard product.
    Mul(NodeId, NodeId),
    /// Matrix plus a column vector broadcast over columns.
    AddCol(NodeId, NodeId),
    Scale(NodeId, f64),
    Shift(NodeId, f64),
    Unary(NodeId, UnaryFn),
    /// Sum of all entries, to a `(1,1)` scalar.
    SumAll(NodeId),
    /// Column sums: `(r,c) -> (1,c)`.
    ColSum(NodeId),
    /// Stacked column vectors.
    Concat(NodeId, NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    /// Whether any leaf is reachable from this node; backward skips
    /// gradient accumulation into constant subtrees.
    needs_grad: bool,
}

/// A shape-checked computation graph. Node ids are topologically ordered by
/// construction, so forward is a single in-order pass.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaves: Vec<(String, NodeId)>,
}

/// Values of every node from one forward pass. Leaf and constant values are
/// borrowed rather than copied; computed nodes own their tensors.
enum Slot<'a> {
    Borrowed(&'a Tensor),
    Owned(Tensor),
}

impl<'a> Slot<'a> {
    #[inline]
    fn get(&self) -> &Tensor {
        match self {
            Slot::Borrowed(t) => t,
            Slot::Owned(t) => t,
        }
    }
}

pub struct Eval<'a> {
    values: Vec<Slot<'a>>,
}

impl<'a> Eval<'a> {
    #[inline]
    pub fn value(&self, id: NodeId) -> &Tensor {
        self.values[id].get()
    }
}

/// Leaf gradients from one backward pass.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize) -> NodeId {
        let needs_grad = match &op {
            Op::Leaf { .. } => true,
            Op::Konst(_) => false,
            Op::MatMul(a, b)
            | Op::MatMulTN(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddCol(a, b)
            | Op::Concat(a, b) => self.nodes[*a].needs_grad || self.nodes[*b].needs_grad,
            Op::Scale(a, _)
            | Op::Shift(a, _)
            | Op::Unary(a, _)
            | Op::SumAll(a)
            | Op::ColSum(a) => self.nodes[*a].needs_grad,
        };
        self.nodes.push(Node {
            op,
            rows,
            cols,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn shape_of(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id].rows, self.nodes[id].cols)
    }

    pub fn leaf(&mut self, name: &str, rows: usize, cols: usize) -> NodeId {
        let id = self.push(
            Op::Leaf {
                name: name.to_string(),
            },
            rows,
            cols,
        );
        self.leaves.push((name.to_string(), id));
        id
    }

    pub fn konst(&mut self, t: Tensor) -> NodeId {
        let (r, c) = t.shape();
        self.push(Op::Konst(t), r, c)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape_of(a);
        let (k2, n) = self.shape_of(b);
        if k != k2 {
            return Err(CoreError::shape(
                "matmul",
                format!("({m}x{k}) @ ({k2}x{n})"),
            ));
        }
        Ok(self.push(Op::MatMul(a, b), m, n))
    }

    /// `a^T @ b`
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (k, m) = self.shape_of(a);
        let (k2, n) = self.shape_of(b);
        if k != k2 {
            return Err(CoreError::shape(
                "matmul_tn",
                format!("({k}x{m})^T @ ({k2}x{n})"),
            ));
        }
        Ok(self.push(Op::MatMulTN(a, b), m, n))
    }

    fn binary_same_shape(&mut self, opname: &'static str, a: NodeId, b: NodeId) -> Result<(usize, usize)> {
        let sa = self.shape_of(a);
        let sb = self.shape_of(b);
        if sa != sb {
            return Err(CoreError::shape(
                opname,
                format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1),
            ));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.binary_same_shape("add", a, b)?;
        Ok(self.push(Op::Add(a, b), r, c))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.binary_same_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), r, c))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.binary_same_shape("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), r, c))
    }

    /// Broadcast-add a `(r,1)` column vector to every column of `(r,c)`.
    pub fn add_col(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape_of(a);
        let (vr, vc) = self.shape_of(v);
        if vr != r || vc != 1 {
            return Err(CoreError::shape(
                "add_col",
                format!("matrix {r}x{c} + column {vr}x{vc}"),
            ));
        }
        Ok(self.push(Op::AddCol(a, v), r, c))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let (r, cl) = self.shape_of(a);
        self.push(Op::Scale(a, c), r, cl)
    }

    pub fn shift(&mut self, a: NodeId, c: f64) -> NodeId {
        let (r, cl) = self.shape_of(a);
        self.push(Op::Shift(a, c), r, cl)
    }

    pub fn unary(&mut self, a: NodeId, f: UnaryFn) -> NodeId {
        let (r, c) = self.shape_of(a);
        self.push(Op::Unary(a, f), r, c)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SumAll(a), 1, 1)
    }

    pub fn col_sum(&mut self, a: NodeId) -> NodeId {
        let (_, c) = self.shape_of(a);
        self.push(Op::ColSum(a), 1, c)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.shape_of(a);
        let (rb, cb) = self.shape_of(b);
        if ca != 1 || cb != 1 {
            return Err(CoreError::shape(
                "concat",
                format!("expected column vectors, got {ra}x{ca} and {rb}x{cb}"),
            ));
        }
        Ok(self.push(Op::Concat(a, b), ra + rb, 1))
    }

    /// Runs the tape in node order. Every named leaf must be bound with a
    /// tensor of the declared shape.
    pub fn forward<'a>(&'a self, binds: &[(&str, &'a Tensor)]) -> Result<Eval<'a>> {
        let mut values: Vec<Slot<'a>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v: Slot<'a> = match &node.op {
                Op::Leaf { name } => {
                    let t = binds
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, t)| *t)
                        .ok_or_else(|| {
                            CoreError::contract("forward", format!("leaf `{name}` not bound"))
                        })?;
                    if t.shape() != (node.rows, node.cols) {
                        return Err(CoreError::shape(
                            "forward",
                            format!(
                                "leaf `{name}` declared {}x{}, bound {}x{}",
                                node.rows,
                                node.cols,
                                t.rows(),
                                t.cols()
                            ),
                        ));
                    }
                    Slot::Borrowed(t)
                }
                Op::Konst(t) => Slot::Borrowed(t),
                Op::MatMul(a, b) => Slot::Owned(mm_nn(values[*a].get(), values[*b].get())),
                Op::MatMulTN(a, b) => Slot::Owned(mm_tn(values[*a].get(), values[*b].get())),
                Op::Add(a, b) => {
                    let mut out = values[*a].get().clone();
                    for (o, x) in out.as_mut_slice().iter_mut().zip(values[*b].get().as_slice()) {
                        *o += x;
                    }
                    Slot::Owned(out)
                }
                Op::Sub(a, b) => {
                    let mut out = values[*a].get().clone();
                    for (o, x) in out.as_mut_slice().iter_mut().zip(values[*b].get().as_slice()) {
                        *o -= x;
                    }
                    Slot::Owned(out)
                }
                Op::Mul(a, b) => {
                    let mut out = values[*a].get().clone();
                    for (o, x) in out.as_mut_slice().iter_mut().zip(values[*b].get().as_slice()) {
                        *o *= x;
                    }
                    Slot::Owned(out)
                }
                Op::AddCol(a, v) => {
                    let av = values[*a].get();
                    let col = values[*v].get().as_slice();
                    let (r, c) = av.shape();
                    let mut out = av.clone();
                    let data = out.as_mut_slice();
                    for i in 0..r {
                        let vi = col[i];
                        for x in data[i * c..(i + 1) * c].iter_mut() {
                            *x += vi;
                        }
                    }
                    Slot::Owned(out)
                }
                Op::Scale(a, s) => {
                    let mut out = values[*a].get().clone();
                    for x in out.as_mut_slice() {
                        *x *= s;
                    }
                    Slot::Owned(out)
                }
                Op::Shift(a, s) => {
                    let mut out = values[*a].get().clone();
                    for x in out.as_mut_slice() {
                        *x += s;
                    }
                    Slot::Owned(out)
                }
                Op::Unary(a, f) => {
                    let mut out = values[*a].get().clone();
                    for x in out.as_mut_slice() {
                        *x = f.apply(*x);
                    }
                    Slot::Owned(out)
                }
                Op::SumAll(a) => {
                    Slot::Owned(Tensor::scalar(values[*a].get().as_slice().iter().sum()))
                }
                Op::ColSum(a) => {
                    let av = values[*a].get();
                    let (r, c) = av.shape();
                    let mut out = Tensor::zeros(1, c);
                    for i in 0..r {
                        for j in 0..c {
                            out.as_mut_slice()[j] += av.get(i, j);
                        }
                    }
                    Slot::Owned(out)
                }
                Op::Concat(a, b) => {
                    let mut data = values[*a].get().as_slice().to_vec();
                    data.extend_from_slice(values[*b].get().as_slice());
                    Slot::Owned(Tensor::col(data))
                }
            };
            values.push(v);
        }
        Ok(Eval { values })
    }

    /// Reverse pass from `root`, seeded with `seed` (same shape as `root`).
    /// Each node is visited exactly once; gradients of leaves the root does
    /// not touch come back as zero tensors.
    pub fn backward(&self, eval: &Eval<'_>, root: NodeId, seed: &Tensor) -> Result<Grads> {
        if root >= self.nodes.len() {
            return Err(CoreError::contract(
                "backward",
                format!("root id {root} out of range"),
            ));
        }
        if eval.values.len() != self.nodes.len() {
            return Err(CoreError::contract(
                "backward",
                "evaluation does not match this graph".into(),
            ));
        }
        let rshape = self.shape_of(root);
        if seed.shape() != rshape {
            return Err(CoreError::shape(
                "backward",
                format!(
                    "seed {}x{} vs root {}x{}",
                    seed.rows(),
                    seed.cols(),
                    rshape.0,
                    rshape.1
                ),
            ));
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root] = Some(seed.clone());

        fn acc(slot: &mut Option<Tensor>, t: Tensor) {
            match slot {
                Some(g) => {
                    for (a, b) in g.as_mut_slice().iter_mut().zip(t.as_slice()) {
                        *a += b;
                    }
                }
                None => *slot = Some(t),
            }
        }

        for id in (0..=root).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let wants = |i: NodeId| self.nodes[i].needs_grad;
            match &self.nodes[id].op {
                Op::Leaf { .. } => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Konst(_) => continue,
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        acc(&mut grads[*a], mm_nt(&g, eval.values[*b].get()));
                    }
                    if wants(*b) {
                        acc(&mut grads[*b], mm_tn(eval.values[*a].get(), &g));
                    }
                }
                Op::MatMulTN(a, b) => {
                    if wants(*a) {
                        acc(&mut grads[*a], mm_nt(eval.values[*b].get(), &g));
                    }
                    if wants(*b) {
                        acc(&mut grads[*b], mm_nn(eval.values[*a].get(), &g));
                    }
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        acc(&mut grads[*a], g.clone());
                    }
                    if wants(*b) {
                        acc(&mut grads[*b], g);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*b) {
                        let mut neg = g.clone();
                        for x in neg.as_mut_slice() {
                            *x = -*x;
                        }
                        acc(&mut grads[*b], neg);
                    }
                    if wants(*a) {
                        acc(&mut grads[*a], g);
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        let mut ga = g.clone();
                        for (x, y) in ga.as_mut_slice().iter_mut().zip(eval.values[*b].get().as_slice()) {
                            *x *= y;
                        }
                        acc(&mut grads[*a], ga);
                    }
                    if wants(*b) {
                        let mut gb = g;
                        for (x, y) in gb.as_mut_slice().iter_mut().zip(eval.values[*a].get().as_slice()) {
                            *x *= y;
                        }
                        acc(&mut grads[*b], gb);
                    }
                }
                Op::AddCol(a, v) => {
                    if wants(*v) {
                        let (r, c) = g.shape();
                        let mut gv = Tensor::zeros(r, 1);
                        for i in 0..r {
                            let mut s = 0.0;
                            for j in 0..c {
                                s += g.get(i, j);
                            }
                            gv.as_mut_slice()[i] = s;
                        }
                        acc(&mut grads[*v], gv);
                    }
                    if wants(*a) {
                        acc(&mut grads[*a], g);
                    }
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    for x in ga.as_mut_slice() {
                        *x *= s;
                    }
                    acc(&mut grads[*a], ga);
                }
                Op::Shift(a, _) => acc(&mut grads[*a], g),
                Op::Unary(a, f) => {
                    let mut ga = g;
                    for (x, v) in ga.as_mut_slice().iter_mut().zip(eval.values[*a].get().as_slice()) {
                        *x *= f.deriv(*v);
                    }
                    acc(&mut grads[*a], ga);
                }
                Op::SumAll(a) => {
                    let s = g.as_slice()[0];
                    let (r, c) = self.shape_of(*a);
                    acc(&mut grads[*a], Tensor::filled(r, c, s));
                }
                Op::ColSum(a) => {
                    let (r, c) = self.shape_of(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            ga.set(i, j, g.get(0, j));
                        }
                    }
                    acc(&mut grads[*a], ga);
                }
                Op::Concat(a, b) => {
                    let (ra, _) = self.shape_of(*a);
                    let (rb, _) = self.shape_of(*b);
                    let gs = g.as_slice();
                    if wants(*a) {
                        acc(&mut grads[*a], Tensor::col(gs[..ra].to_vec()));
                    }
                    if wants(*b) {
                        acc(&mut grads[*b], Tensor::col(gs[ra..ra + rb].to_vec()));
                    }
                }
            }
        }

        // Fill untouched leaves with zeros of the declared shape.
        for (_, id) in &self.leaves {
            if grads[*id].is_none() {
                let (r, c) = self.shape_of(*id);
                grads[*id] = Some(Tensor::zeros(r, c));
            }
        }
        Ok(Grads { grads })
    }
}

impl Grads {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

/// Central-difference gradient of a scalar function — the oracle every
/// backward pass in this crate is checked against.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h <= 0.0 {
        return Err(CoreError::contract(
            "finite_diff_gradient",
            format!("step must be positive, got {h}"),
        ));
    }
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp_ = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g.push((fp_ - fm) / (2.0 * h));
    }
    Ok(g)
}
