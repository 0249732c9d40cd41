//! Input-convex neural networks and their differences.
//!
//! An ICNN here is a dense multilayer network
//! `z_i = σ_i(W_i z_{i-1} + V_i x + b_i)` (the first layer has no `W`),
//! reduced to a scalar by a non-negative linear head. Convexity in `x` holds
//! as long as every `W_i` entry and every head weight is non-negative and
//! each `σ_i` is convex and non-decreasing — the activation enumeration only
//! admits such functions, and [`project_nonneg`] restores the weight
//! constraint after optimizer steps.
//!
//! A [`DcRegularizer`] is an ordered pair of ICNNs (or an ICNN plus a fixed
//! quadratic in weakly-convex mode); its value is *defined* as
//! `r1(x) - r2(x)`, so the DC identity holds bitwise by construction.

use crate::autodiff::{Graph, NodeId, UnaryFn};
use crate::error::CoreError;
use crate::fp;
use crate::la;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Convex, non-decreasing activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Slope must lie in (0, 1] to stay convex and non-decreasing.
    LeakyRelu { slope: f64 },
    Softplus { beta: f64 },
}

impl Activation {
    pub fn validate(self) -> Result<()> {
        match self {
            Activation::Relu => Ok(()),
            Activation::LeakyRelu { slope } => {
                if slope > 0.0 && slope <= 1.0 {
                    Ok(())
                } else {
                    Err(CoreError::contract(
                        "activation",
                        format!("leaky slope must lie in (0, 1], got {slope}"),
                    ))
                }
            }
            Activation::Softplus { beta } => {
                if beta > 0.0 {
                    Ok(())
                } else {
                    Err(CoreError::contract(
                        "activation",
                        format!("softplus beta must be positive, got {beta}"),
                    ))
                }
            }
        }
    }

    pub(crate) fn unary(self) -> UnaryFn {
        match self {
            Activation::Relu => UnaryFn::Relu,
            Activation::LeakyRelu { slope } => UnaryFn::LeakyRelu { slope },
            Activation::Softplus { beta } => UnaryFn::Softplus { beta },
        }
    }

    /// a.e.-derivative as a tape primitive (used by the unrolled input
    /// gradient inside the training penalty).
    pub(crate) fn unary_prime(self) -> UnaryFn {
        match self {
            Activation::Relu => UnaryFn::ReluStep,
            Activation::LeakyRelu { slope } => UnaryFn::LeakyStep { slope },
            Activation::Softplus { beta } => UnaryFn::SigmoidScaled { beta },
        }
    }

    /// Smooth enough for Lipschitz-gradient estimates: softplus, or the
    /// slope-1 (linear) edge of leaky relu.
    pub fn is_smooth(self) -> bool {
        match self {
            Activation::Softplus { .. } => true,
            Activation::LeakyRelu { slope } => slope == 1.0,
            Activation::Relu => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcnnLayer {
    /// Non-negative recurrent weights, `width_i x width_{i-1}`; absent on the
    /// first layer (there is no `z_0`).
    pub w: Option<Tensor>,
    /// Unconstrained input weights, `width_i x d`.
    pub w_tilde: Tensor,
    /// Bias, `width_i x 1`.
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcnnParams {
    pub input_dim: usize,
    pub layers: Vec<IcnnLayer>,
    /// Non-negative head weights, `1 x width_D`.
    pub head_w: Tensor,
    /// Head bias, `1 x 1`.
    pub head_b: Tensor,
}

/// Whether a parameter is constrained non-negative (clamped after steps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamTag {
    Nonneg,
    Free,
}

impl IcnnParams {
    /// Random initialization. `w_tilde`/`bias` are centered uniform scaled by
    /// `1/sqrt(fan_in)`; the constrained weights start from the absolute
    /// value of the same law, so the network is convex before any projection.
    pub fn new_random(
        input_dim: usize,
        width: usize,
        depth: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        Self::new_random_scaled(input_dim, width, depth, activation, seed, 1.0)
    }

    /// Like [`IcnnParams::new_random`] with the head weights shrunk by
    /// `head_scale`. Critic training starts the network inside the
    /// 1-Lipschitz band this way, so the one-sided gradient penalty is
    /// inactive at step zero and cannot flatten the fresh network.
    pub fn new_random_scaled(
        input_dim: usize,
        width: usize,
        depth: usize,
        activation: Activation,
        seed: u64,
        head_scale: f64,
    ) -> Result<Self> {
        activation.validate()?;
        if depth < 1 || width < 1 || input_dim < 1 {
            return Err(CoreError::contract(
                "icnn.new_random",
                format!("need depth, width, input_dim >= 1; got {depth}, {width}, {input_dim}"),
            ));
        }
        let mut rng = Rng::new(seed);
        let mut layers = Vec::with_capacity(depth);
        for i in 0..depth {
            let fan_in = if i == 0 { input_dim } else { width + input_dim };
            let sc = 1.0 / fp::sqrt(fan_in as f64);
            let w = if i == 0 {
                None
            } else {
                let mut t = Tensor::zeros(width, width);
                let wsc = 1.0 / fp::sqrt(width as f64);
                for v in t.as_mut_slice() {
                    *v = fp::abs(rng.range(-1.0, 1.0)) * wsc;
                }
                Some(t)
            };
            let mut w_tilde = Tensor::zeros(width, input_dim);
            let xsc = 1.0 / fp::sqrt(input_dim as f64);
            for v in w_tilde.as_mut_slice() {
                *v = rng.range(-1.0, 1.0) * xsc;
            }
            let mut bias = Tensor::zeros(width, 1);
            for v in bias.as_mut_slice() {
                *v = rng.range(-1.0, 1.0) * sc;
            }
            layers.push(IcnnLayer {
                w,
                w_tilde,
                bias,
                activation,
            });
        }
        let mut head_w = Tensor::zeros(1, width);
        let hsc = head_scale / fp::sqrt(width as f64);
        for v in head_w.as_mut_slice() {
            *v = fp::abs(rng.range(-1.0, 1.0)) * hsc;
        }
        Ok(IcnnParams {
            input_dim,
            layers,
            head_w,
            head_b: Tensor::scalar(0.0),
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w_tilde.rows())
    }

    pub fn num_params(&self) -> usize {
        let mut n = self.head_w.len() + self.head_b.len();
        for l in &self.layers {
            n += l.w.as_ref().map_or(0, Tensor::len) + l.w_tilde.len() + l.bias.len();
        }
        n
    }

    pub fn visit_params<'a>(
        &'a self,
        prefix: &str,
        f: &mut impl FnMut(String, &'a Tensor, ParamTag),
    ) {
        for (i, l) in self.layers.iter().enumerate() {
            if let Some(w) = &l.w {
                f(format!("{prefix}w{i}"), w, ParamTag::Nonneg);
            }
            f(format!("{prefix}wt{i}"), &l.w_tilde, ParamTag::Free);
            f(format!("{prefix}b{i}"), &l.bias, ParamTag::Free);
        }
        f(format!("{prefix}hw"), &self.head_w, ParamTag::Nonneg);
        f(format!("{prefix}hb"), &self.head_b, ParamTag::Free);
    }

    pub fn visit_params_mut(
        &mut self,
        prefix: &str,
        f: &mut impl FnMut(String, &mut Tensor, ParamTag),
    ) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            if let Some(w) = &mut l.w {
                f(format!("{prefix}w{i}"), w, ParamTag::Nonneg);
            }
            f(format!("{prefix}wt{i}"), &mut l.w_tilde, ParamTag::Free);
            f(format!("{prefix}b{i}"), &mut l.bias, ParamTag::Free);
        }
        f(format!("{prefix}hw"), &mut self.head_w, ParamTag::Nonneg);
        f(format!("{prefix}hb"), &mut self.head_b, ParamTag::Free);
    }
}

fn clamp_nonneg(t: &mut Tensor) {
    for v in t.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Clamps every constrained weight to `max(entry, 0)`; input weights and
/// biases are untouched. Idempotent, bitwise.
pub fn project_nonneg(p: &IcnnParams) -> IcnnParams {
    let mut out = p.clone();
    project_nonneg_mut(&mut out);
    out
}

pub fn project_nonneg_mut(p: &mut IcnnParams) {
    for l in p.layers.iter_mut() {
        if let Some(w) = &mut l.w {
            clamp_nonneg(w);
        }
    }
    clamp_nonneg(&mut p.head_w);
}

/// True when every constrained weight is non-negative.
pub fn is_nonneg(p: &IcnnParams) -> bool {
    let ok_t = |t: &Tensor| t.as_slice().iter().all(|v| *v >= 0.0);
    p.layers
        .iter()
        .all(|l| l.w.as_ref().map_or(true, ok_t))
        && ok_t(&p.head_w)
}

// ---------------------------------------------------------------------------
// Graph construction shared by the evaluator and the training loss.

/// Parameter node ids for one network inside a graph. Declared once and
/// shared by every forward pass over the same parameters, so backward
/// accumulates a single gradient per parameter.
pub(crate) struct NetParamNodes {
    /// `(w, w_tilde, bias)` per layer; `w` absent on the first layer.
    pub layers: Vec<(Option<NodeId>, NodeId, NodeId)>,
    pub head_w: NodeId,
    pub head_b: NodeId,
}

/// Declares every parameter as a named leaf (`{prefix}w{i}` etc.).
pub(crate) fn declare_param_leaves(g: &mut Graph, prefix: &str, p: &IcnnParams) -> NetParamNodes {
    let mut layers = Vec::with_capacity(p.layers.len());
    for (i, l) in p.layers.iter().enumerate() {
        let w = l
            .w
            .as_ref()
            .map(|w| g.leaf(&format!("{prefix}w{i}"), w.rows(), w.cols()));
        let wt = g.leaf(&format!("{prefix}wt{i}"), l.w_tilde.rows(), l.w_tilde.cols());
        let b = g.leaf(&format!("{prefix}b{i}"), l.bias.rows(), l.bias.cols());
        layers.push((w, wt, b));
    }
    let head_w = g.leaf(&format!("{prefix}hw"), p.head_w.rows(), p.head_w.cols());
    let head_b = g.leaf(&format!("{prefix}hb"), p.head_b.rows(), p.head_b.cols());
    NetParamNodes {
        layers,
        head_w,
        head_b,
    }
}

/// Bakes every parameter in as a constant (frozen evaluator).
pub(crate) fn declare_param_consts(g: &mut Graph, p: &IcnnParams) -> NetParamNodes {
    let mut layers = Vec::with_capacity(p.layers.len());
    for l in &p.layers {
        let w = l.w.as_ref().map(|w| g.konst(w.clone()));
        let wt = g.konst(l.w_tilde.clone());
        let b = g.konst(l.bias.clone());
        layers.push((w, wt, b));
    }
    let head_w = g.konst(p.head_w.clone());
    let head_b = g.konst(p.head_b.clone());
    NetParamNodes {
        layers,
        head_w,
        head_b,
    }
}

pub(crate) struct NetNodes {
    /// Scalar scores per batch column, `1 x B`.
    pub score: NodeId,
    /// Pre-activation node per layer, `width x B`.
    pub preacts: Vec<NodeId>,
}

/// Emits the score head for a batch `x: d x B` over existing parameter nodes.
pub(crate) fn build_net_from(
    g: &mut Graph,
    params: &NetParamNodes,
    p: &IcnnParams,
    x: NodeId,
) -> Result<NetNodes> {
    let mut preacts = Vec::with_capacity(p.layers.len());
    let mut z: Option<NodeId> = None;
    for (i, l) in p.layers.iter().enumerate() {
        let (w_node, wt, b) = params.layers[i];
        let mut a = g.matmul(wt, x)?;
        if let Some(wn) = w_node {
            let wz = g.matmul(wn, z.expect("layer > 0 has a predecessor"))?;
            a = g.add(a, wz)?;
        }
        let a = g.add_col(a, b)?;
        preacts.push(a);
        z = Some(g.unary(a, l.activation.unary()));
    }
    let s = g.matmul(params.head_w, z.expect("depth >= 1"))?;
    let score = g.add_col(s, params.head_b)?;
    Ok(NetNodes { score, preacts })
}

/// Unrolls the input-gradient recursion as forward tape ops (so the result
/// stays differentiable in the parameters). `ones_row` is a constant
/// `1 x B` of ones. Returns the `d x B` matrix of columns `∇_x score`.
pub(crate) fn build_input_grad(
    g: &mut Graph,
    params: &NetParamNodes,
    p: &IcnnParams,
    nodes: &NetNodes,
    ones_row: NodeId,
) -> Result<NodeId> {
    // delta_D = head_w^T broadcast over the batch
    let mut delta = g.matmul_tn(params.head_w, ones_row)?;
    let mut grad: Option<NodeId> = None;
    for i in (0..p.layers.len()).rev() {
        let prime = g.unary(nodes.preacts[i], p.layers[i].activation.unary_prime());
        let s = g.mul(prime, delta)?;
        let (w_node, wt_node, _) = params.layers[i];
        let contrib = g.matmul_tn(wt_node, s)?;
        grad = Some(match grad {
            Some(acc) => g.add(acc, contrib)?,
            None => contrib,
        });
        if let Some(wn) = w_node {
            delta = g.matmul_tn(wn, s)?;
        }
    }
    Ok(grad.expect("depth >= 1"))
}

/// Pushes `(name, &tensor)` pairs for every parameter of `p` under `prefix`.
pub(crate) fn collect_param_refs<'a>(
    out: &mut Vec<(String, &'a Tensor)>,
    prefix: &str,
    p: &'a IcnnParams,
) {
    p.visit_params(prefix, &mut |name, t, _| out.push((name, t)));
}

/// Frozen-parameter evaluator: parameters are constants, only `x` is a leaf.
/// Evaluation and input gradients are pure and reuse one prebuilt graph, so
/// an evaluator can be shared across threads and hot loops.
pub struct IcnnEvaluator {
    graph: Graph,
    x_id: NodeId,
    score: NodeId,
    input_dim: usize,
}

impl IcnnEvaluator {
    pub fn new(p: &IcnnParams) -> Result<Self> {
        for l in &p.layers {
            l.activation.validate()?;
        }
        let mut g = Graph::new();
        let x = g.leaf("x", p.input_dim, 1);
        let params = declare_param_consts(&mut g, p);
        let nodes = build_net_from(&mut g, &params, p, x)?;
        Ok(IcnnEvaluator {
            graph: g,
            x_id: x,
            score: nodes.score,
            input_dim: p.input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn check_dim(&self, x: &[f64], op: &'static str) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(CoreError::shape(
                op,
                format!("input length {} vs network dim {}", x.len(), self.input_dim),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x, "icnn_eval")?;
        let t = Tensor::col(x.to_vec());
        let ev = self.graph.forward(&[("x", &t)])?;
        ev.value(self.score).item()
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_grad(x)?.1)
    }

    pub fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x, "icnn_grad_x")?;
        let t = Tensor::col(x.to_vec());
        let ev = self.graph.forward(&[("x", &t)])?;
        let val = ev.value(self.score).item()?;
        let grads = self.graph.backward(&ev, self.score, &Tensor::scalar(1.0))?;
        let gx = grads
            .wrt(self.x_id)
            .expect("input leaf always receives a gradient")
            .as_slice()
            .to_vec();
        Ok((val, gx))
    }
}

/// Scalar network output `z_D(x)` reduced by the non-negative head.
pub fn icnn_eval(p: &IcnnParams, x: &[f64]) -> Result<f64> {
    IcnnEvaluator::new(p)?.eval(x)
}

/// One subgradient selection of the network at `x` (reverse mode with the
/// relu-at-zero convention). Prefer an [`IcnnEvaluator`] in hot loops.
pub fn icnn_grad_x(p: &IcnnParams, x: &[f64]) -> Result<Vec<f64>> {
    IcnnEvaluator::new(p)?.grad(x)
}

// ---------------------------------------------------------------------------
// DC regularizers

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DcMode {
    /// `r1 - r2`, both networks.
    Dc,
    /// `r2 ≡ 0`.
    ConvexOnly,
    /// `r2 = (rho/2)||x||^2`.
    WeaklyConvex { rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcRegularizer {
    pub r1: IcnnParams,
    /// Present exactly in `Dc` mode.
    pub r2: Option<IcnnParams>,
    pub mode: DcMode,
}

impl DcRegularizer {
    pub fn dc(r1: IcnnParams, r2: IcnnParams) -> Result<Self> {
        if r1.input_dim != r2.input_dim {
            return Err(CoreError::shape(
                "dc_regularizer",
                format!("r1 dim {} vs r2 dim {}", r1.input_dim, r2.input_dim),
            ));
        }
        Ok(DcRegularizer {
            r1,
            r2: Some(r2),
            mode: DcMode::Dc,
        })
    }

    pub fn convex_only(r1: IcnnParams) -> Self {
        DcRegularizer {
            r1,
            r2: None,
            mode: DcMode::ConvexOnly,
        }
    }

    pub fn weakly_convex(r1: IcnnParams, rho: f64) -> Result<Self> {
        if rho < 0.0 {
            return Err(CoreError::contract(
                "dc_regularizer",
                format!("rho must be non-negative, got {rho}"),
            ));
        }
        Ok(DcRegularizer {
            r1,
            r2: None,
            mode: DcMode::WeaklyConvex { rho },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.r1.input_dim
    }

    pub fn visit_params<'a>(&'a self, f: &mut impl FnMut(String, &'a Tensor, ParamTag)) {
        self.r1.visit_params("r1.", f);
        if let Some(r2) = &self.r2 {
            r2.visit_params("r2.", f);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(String, &mut Tensor, ParamTag)) {
        self.r1.visit_params_mut("r1.", f);
        if let Some(r2) = &mut self.r2 {
            r2.visit_params_mut("r2.", f);
        }
    }

    pub fn project_nonneg_mut(&mut self) {
        project_nonneg_mut(&mut self.r1);
        if let Some(r2) = &mut self.r2 {
            project_nonneg_mut(r2);
        }
    }

    pub fn num_params(&self) -> usize {
        self.r1.num_params() + self.r2.as_ref().map_or(0, IcnnParams::num_params)
    }
}

/// Frozen evaluator for a DC regularizer.
pub struct DcEvaluator {
    pub e1: IcnnEvaluator,
    pub e2: Option<IcnnEvaluator>,
    pub mode: DcMode,
}

impl DcEvaluator {
    pub fn new(r: &DcRegularizer) -> Result<Self> {
        let e2 = match (&r.mode, &r.r2) {
            (DcMode::Dc, Some(p)) => Some(IcnnEvaluator::new(p)?),
            (DcMode::Dc, None) => {
                return Err(CoreError::contract(
                    "dc_evaluator",
                    "dc mode without second network".into(),
                ))
            }
            _ => None,
        };
        Ok(DcEvaluator {
            e1: IcnnEvaluator::new(&r.r1)?,
            e2,
            mode: r.mode,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.e1.input_dim()
    }

    /// `r1(x) - r2(x)`, computed exactly as written.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.r1_eval(x)? - self.r2_eval(x)?)
    }

    pub fn r1_eval(&self, x: &[f64]) -> Result<f64> {
        self.e1.eval(x)
    }

    pub fn r2_eval(&self, x: &[f64]) -> Result<f64> {
        match self.mode {
            DcMode::Dc => self.e2.as_ref().expect("dc mode").eval(x),
            DcMode::ConvexOnly => Ok(0.0),
            DcMode::WeaklyConvex { rho } => Ok(0.5 * rho * la::dot(x, x)),
        }
    }

    pub fn r1_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.e1.grad(x)
    }

    pub fn r2_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            DcMode::Dc => self.e2.as_ref().expect("dc mode").grad(x),
            DcMode::ConvexOnly => Ok(vec![0.0; x.len()]),
            DcMode::WeaklyConvex { rho } => Ok(x.iter().map(|v| rho * v).collect()),
        }
    }

    /// Both subgradient selections, `(g1, g2)` — solvers consume them
    /// separately.
    pub fn grads(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.r1_grad(x)?, self.r2_grad(x)?))
    }
}

/// `dc_eval(r, x) = r1(x) - r2(x)`.
pub fn dc_eval(r: &DcRegularizer, x: &[f64]) -> Result<f64> {
    DcEvaluator::new(r)?.eval(x)
}

/// Subgradient selections of both convex parts.
pub fn dc_grad(r: &DcRegularizer, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    DcEvaluator::new(r)?.grads(x)
}

// ---------------------------------------------------------------------------
// Empirical smoothness

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessEstimate {
    /// Max of `||∇R(x) - ∇R(x')|| / ||x - x'||` over sampled pairs.
    pub l_hat: f64,
    pub pairs: usize,
}

/// Empirical Lipschitz constant of an arbitrary gradient map over a box.
/// Pairs are drawn sequentially from the seed, so a larger `pairs` with the
/// same seed extends the sample and the estimate is monotone in `pairs`.
pub fn estimate_smoothness_fn(
    mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    lo: &[f64],
    hi: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<SmoothnessEstimate> {
    if pairs < 1 {
        return Err(CoreError::contract(
            "estimate_smoothness",
            "need at least one probe pair".into(),
        ));
    }
    if lo.len() != hi.len() {
        return Err(CoreError::shape(
            "estimate_smoothness",
            format!("box bounds: {} vs {}", lo.len(), hi.len()),
        ));
    }
    let d = lo.len();
    let mut rng = Rng::new(seed);
    let mut l_hat = 0.0f64;
    let mut x = vec![0.0; d];
    let mut xp = vec![0.0; d];
    for _ in 0..pairs {
        for i in 0..d {
            x[i] = rng.range(lo[i], hi[i]);
            xp[i] = rng.range(lo[i], hi[i]);
        }
        let dist = la::dist2(&x, &xp);
        if dist < 1e-12 {
            continue;
        }
        let gx = grad(&x)?;
        let gxp = grad(&xp)?;
        l_hat = l_hat.max(la::dist2(&gx, &gxp) / dist);
    }
    Ok(SmoothnessEstimate { l_hat, pairs })
}

/// Empirical `L`-smoothness of a network over a box. Requires smooth
/// activations (softplus mode; the slope-1 linear edge of leaky relu also
/// qualifies).
pub fn estimate_smoothness(
    p: &IcnnParams,
    lo: &[f64],
    hi: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<SmoothnessEstimate> {
    if !p.layers.iter().all(|l| l.activation.is_smooth()) {
        return Err(CoreError::contract(
            "estimate_smoothness",
            "network has non-smooth activations; rebuild it in softplus mode".into(),
        ));
    }
    let ev = IcnnEvaluator::new(p)?;
    estimate_smoothness_fn(|x| ev.grad(x), lo, hi, pairs, seed)
}

// ---------------------------------------------------------------------------
// Convexity certification by random Jensen triples

#[derive(Debug, Clone, Copy)]
pub struct JensenReport {
    pub triples: usize,
    pub violations: usize,
    /// Largest `f(mid) - blend`, normalized by `max(1, |values|)`.
    pub max_violation: f64,
}

impl JensenReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Tests `f(λx + (1-λ)y) ≤ λ f(x) + (1-λ) f(y) + tol * max(1, |values|)` on
/// random triples in a box.
pub fn jensen_convexity_check(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    lo: &[f64],
    hi: &[f64],
    triples: usize,
    tol: f64,
    seed: u64,
) -> Result<JensenReport> {
    let d = lo.len();
    let mut rng = Rng::new(seed);
    let mut violations = 0usize;
    let mut max_violation = f64::NEG_INFINITY;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut m = vec![0.0; d];
    for _ in 0..triples {
        for i in 0..d {
            x[i] = rng.range(lo[i], hi[i]);
            y[i] = rng.range(lo[i], hi[i]);
        }
        let lam = rng.uniform();
        for i in 0..d {
            m[i] = lam * x[i] + (1.0 - lam) * y[i];
        }
        let fx = f(&x)?;
        let fy = f(&y)?;
        let fm = f(&m)?;
        let scale = 1.0f64.max(fp::abs(fx)).max(fp::abs(fy)).max(fp::abs(fm));
        let gap = (fm - (lam * fx + (1.0 - lam) * fy)) / scale;
        if gap > max_violation {
            max_violation = gap;
        }
        if gap > tol {
            violations += 1;
        }
    }
    Ok(JensenReport {
        triples,
        violations,
        max_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_net(d: usize, width: usize, depth: usize) -> IcnnParams {
        let mut p = IcnnParams::new_random(d, width, depth, Activation::Relu, 1).unwrap();
        let mut zero = |_n: String, t: &mut Tensor, _tag: ParamTag| {
            for v in t.as_mut_slice() {
                *v = 0.0;
            }
        };
        p.visit_params_mut("", &mut zero);
        p
    }

    #[test]
    fn zero_network_evaluates_to_zero() {
        let p = zero_net(3, 4, 2);
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]] {
            assert_eq!(icnn_eval(&p, &x).unwrap(), 0.0);
        }
        assert_eq!(icnn_grad_x(&p, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_relu_unit_by_hand() {
        // 1 layer, w_tilde = [1], b = 0, relu, head weight 1.
        let mut p = zero_net(1, 1, 1);
        p.layers[0].w_tilde.as_mut_slice()[0] = 1.0;
        p.head_w.as_mut_slice()[0] = 1.0;
        assert_eq!(icnn_eval(&p, &[-2.0]).unwrap(), 0.0);
        assert_eq!(icnn_eval(&p, &[3.0]).unwrap(), 3.0);
    }

    #[test]
    fn depth_two_forward_matches_pencil_computation() {
        // x in R^2, width 2, relu everywhere.
        // layer 0: a0 = V0 x + b0, V0 = I, b0 = [0.5, -0.5]
        // layer 1: a1 = W1 z0 + V1 x + b1, W1 = [[1, 1], [2, 0]],
        //          V1 = [[0, 1], [1, 0]], b1 = 0
        // head: [1, 2], bias 0.25
        let mut p = zero_net(2, 2, 2);
        p.layers[0]
            .w_tilde
            .as_mut_slice()
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        p.layers[0].bias.as_mut_slice().copy_from_slice(&[0.5, -0.5]);
        p.layers[1]
            .w
            .as_mut()
            .unwrap()
            .as_mut_slice()
            .copy_from_slice(&[1.0, 1.0, 2.0, 0.0]);
        p.layers[1]
            .w_tilde
            .as_mut_slice()
            .copy_from_slice(&[0.0, 1.0, 1.0, 0.0]);
        p.head_w.as_mut_slice().copy_from_slice(&[1.0, 2.0]);
        p.head_b = Tensor::scalar(0.25);

        // x = [1, 1]: z0 = relu([1.5, 0.5]) = [1.5, 0.5]
        // a1 = W1 z0 + V1 x = [2.0, 3.0] + [1.0, 1.0] = [3.0, 4.0]
        // score = 1*3 + 2*4 + 0.25 = 11.25
        assert_eq!(icnn_eval(&p, &[1.0, 1.0]).unwrap(), 11.25);
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let mut p = IcnnParams::new_random(2, 3, 2, Activation::Relu, 5).unwrap();
        p.layers[1].w.as_mut().unwrap().as_mut_slice()[0] = -1.0;
        p.layers[1].w.as_mut().unwrap().as_mut_slice()[1] = 2.0;
        let q = project_nonneg(&p);
        assert_eq!(q.layers[1].w.as_ref().unwrap().as_slice()[0], 0.0);
        assert_eq!(q.layers[1].w.as_ref().unwrap().as_slice()[1], 2.0);
        assert!(is_nonneg(&q));
        let r = project_nonneg(&q);
        assert_eq!(q, r);
    }

    #[test]
    fn dc_identity_is_bitwise() {
        let r1 = IcnnParams::new_random(2, 5, 2, Activation::Softplus { beta: 1.0 }, 2).unwrap();
        let r2 = IcnnParams::new_random(2, 5, 2, Activation::Softplus { beta: 1.0 }, 3).unwrap();
        let reg = DcRegularizer::dc(r1.clone(), r2.clone()).unwrap();
        let x = [0.4, -1.2];
        let lhs = dc_eval(&reg, &x).unwrap();
        let rhs = icnn_eval(&r1, &x).unwrap() - icnn_eval(&r2, &x).unwrap();
        assert_eq!(lhs.to_bits(), rhs.to_bits());
    }

    #[test]
    fn identical_networks_cancel() {
        let r1 = IcnnParams::new_random(3, 4, 2, Activation::Relu, 11).unwrap();
        let reg = DcRegularizer::dc(r1.clone(), r1).unwrap();
        for seed in 0..5u64 {
            let mut rng = Rng::new(seed);
            let x = rng.normal_vec(3);
            assert_eq!(dc_eval(&reg, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn convex_only_matches_r1() {
        let r1 = IcnnParams::new_random(2, 4, 2, Activation::Relu, 7).unwrap();
        let reg = DcRegularizer::convex_only(r1.clone());
        let x = [1.0, -0.3];
        assert_eq!(
            dc_eval(&reg, &x).unwrap().to_bits(),
            icnn_eval(&r1, &x).unwrap().to_bits()
        );
    }

    #[test]
    fn weakly_convex_subtracts_quadratic() {
        let r1 = IcnnParams::new_random(2, 4, 2, Activation::Relu, 7).unwrap();
        let reg = DcRegularizer::weakly_convex(r1.clone(), 2.0).unwrap();
        let x = [1.0, 1.0];
        let expect = icnn_eval(&r1, &x).unwrap() - 2.0;
        assert!((dc_eval(&reg, &x).unwrap() - expect).abs() < 1e-15);
        let (_, g2) = dc_grad(&reg, &x).unwrap();
        assert_eq!(g2, vec![2.0, 2.0]);
    }

    #[test]
    fn linear_network_has_constant_gradient() {
        // leaky slope 1 is the identity activation, so the net is linear.
        let mut p = zero_net(2, 2, 1);
        p.layers[0].activation = Activation::LeakyRelu { slope: 1.0 };
        p.layers[0]
            .w_tilde
            .as_mut_slice()
            .copy_from_slice(&[3.0, -1.0, 0.5, 2.0]);
        p.head_w.as_mut_slice().copy_from_slice(&[1.0, 1.0]);
        // grad = V^T head^T = [3.5, 1.0]
        let g0 = icnn_grad_x(&p, &[0.0, 0.0]).unwrap();
        let g1 = icnn_grad_x(&p, &[5.0, -2.0]).unwrap();
        assert_eq!(g0, vec![3.5, 1.0]);
        assert_eq!(g0, g1);

        let est = estimate_smoothness(&p, &[-2.0, -2.0], &[2.0, 2.0], 50, 3).unwrap();
        assert!(est.l_hat < 1e-9);
    }

    #[test]
    fn smoothness_rejects_kinked_activations() {
        let p = IcnnParams::new_random(2, 3, 2, Activation::Relu, 1).unwrap();
        assert!(estimate_smoothness(&p, &[-1.0, -1.0], &[1.0, 1.0], 10, 1).is_err());
    }

    #[test]
    fn smoothness_estimate_monotone_in_pairs() {
        let p = IcnnParams::new_random(2, 6, 2, Activation::Softplus { beta: 1.0 }, 9).unwrap();
        let lo = [-2.0, -2.0];
        let hi = [2.0, 2.0];
        let e1 = estimate_smoothness(&p, &lo, &hi, 20, 4).unwrap();
        let e2 = estimate_smoothness(&p, &lo, &hi, 80, 4).unwrap();
        let e3 = estimate_smoothness(&p, &lo, &hi, 320, 4).unwrap();
        assert!(e2.l_hat >= e1.l_hat);
        assert!(e3.l_hat >= e2.l_hat);
    }

    #[test]
    fn quadratic_gradient_map_has_unit_lipschitz_estimate() {
        // grad of 0.5||x||^2 is the identity map.
        let est =
            estimate_smoothness_fn(|x| Ok(x.to_vec()), &[-2.0, -2.0], &[2.0, 2.0], 500, 11)
                .unwrap();
        assert!((est.l_hat - 1.0).abs() < 0.05, "got {}", est.l_hat);
    }

    #[test]
    fn monotone_along_nonnegative_directions() {
        // Hand-built monotone network: all weight blocks non-negative.
        let mut p = IcnnParams::new_random(2, 3, 2, Activation::Relu, 13).unwrap();
        let mut absall = |_n: String, t: &mut Tensor, _tag: ParamTag| {
            for v in t.as_mut_slice() {
                *v = fp::abs(*v);
            }
        };
        p.visit_params_mut("", &mut absall);
        let ev = IcnnEvaluator::new(&p).unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let x = [rng.range(-2.0, 2.0), rng.range(-2.0, 2.0)];
            let t = rng.range(0.0, 1.5);
            let v = [rng.uniform(), rng.uniform()];
            let xp = [x[0] + t * v[0], x[1] + t * v[1]];
            let f0 = ev.eval(&x).unwrap();
            let f1 = ev.eval(&xp).unwrap();
            assert!(f1 >= f0 - 1e-12);
        }
    }

    #[test]
    fn fresh_networks_pass_jensen_triples() {
        for seed in 0..4u64 {
            let p =
                IcnnParams::new_random(2, 8, 3, Activation::LeakyRelu { slope: 0.2 }, seed)
                    .unwrap();
            let ev = IcnnEvaluator::new(&p).unwrap();
            let rep = jensen_convexity_check(
                |x| ev.eval(x),
                &[-3.0, -3.0],
                &[3.0, 3.0],
                2000,
                1e-9,
                seed + 100,
            )
            .unwrap();
            assert!(rep.passed(), "violations: {}", rep.violations);
        }
    }
}
