//! Weakly supervised critic-style training of a DC regularizer.
//!
//! The loss drives the regularizer to score clean samples low and
//! artifact-laden reconstructions high, with a gradient penalty nudging it
//! toward 1-Lipschitz behavior:
//!
//! `mean_clean R - mean_noisy R + λ · mean (||∇_x R(x̃)|| - 1)₊²`
//!
//! Penalty points `x̃` default to convex combinations of paired clean/noisy
//! samples with uniform weights; clean-only and noisy-only sampling are
//! available as alternatives. The input gradient inside the penalty is
//! unrolled as tape ops, so one reverse pass yields exact parameter
//! gradients of the whole loss (including the penalty's second-order path).
//!
//! Every optimizer step is followed by the non-negativity projection, so the
//! convexity constraint holds at all times. Fixed seeds give bit-identical
//! checkpoints.

use crate::autodiff::{Graph, NodeId, UnaryFn};
use crate::error::CoreError;
use crate::icnn::{
    build_input_grad, build_net_from, collect_param_refs, declare_param_leaves, DcMode,
    DcRegularizer, NetParamNodes,
};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optim {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Optim {
    pub fn adam_default() -> Self {
        Optim::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Where the Lipschitz penalty is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyAt {
    /// `x̃ = u·x_clean + (1-u)·x_noisy`, `u ~ U(0,1)` per pair.
    Interpolate,
    Clean,
    Noisy,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lambda_gp: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optim: Optim,
    pub penalty_at: PenaltyAt,
    /// Fraction of each pool held out for the separation statistic.
    pub holdout_frac: f64,
    /// Run the validation scorer every this many epochs (1 = every epoch).
    pub val_every: usize,
    /// Abort when the loss magnitude exceeds this.
    pub abort_loss: f64,
}

impl TrainConfig {
    pub fn new(lambda_gp: f64, lr: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            lambda_gp,
            lr,
            batch_size,
            epochs,
            seed,
            optim: Optim::adam_default(),
            penalty_at: PenaltyAt::Interpolate,
            holdout_frac: 0.1,
            val_every: 1,
            abort_loss: 1e12,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda_gp <= 0.0 {
            return Err(CoreError::contract(
                "train_config",
                format!("lambda_gp must be positive, got {}", self.lambda_gp),
            ));
        }
        if self.lr <= 0.0 {
            return Err(CoreError::contract(
                "train_config",
                format!("lr must be positive, got {}", self.lr),
            ));
        }
        if self.batch_size == 0 {
            return Err(CoreError::contract("train_config", "batch_size must be >= 1".into()));
        }
        if !(0.0..=0.5).contains(&self.holdout_frac) {
            return Err(CoreError::contract(
                "train_config",
                format!("holdout_frac must lie in [0, 0.5], got {}", self.holdout_frac),
            ));
        }
        Ok(())
    }
}

/// Unpaired clean samples and pseudo-inverse reconstructions.
#[derive(Debug, Clone)]
pub struct SampleSource {
    pub clean: Vec<Vec<f64>>,
    pub noisy: Vec<Vec<f64>>,
}

impl SampleSource {
    pub fn dim(&self) -> Result<usize> {
        let d = self
            .clean
            .first()
            .map(Vec::len)
            .ok_or_else(|| CoreError::contract("sample_source", "clean pool is empty".into()))?;
        if self.noisy.is_empty() {
            return Err(CoreError::contract("sample_source", "noisy pool is empty".into()));
        }
        for v in self.clean.iter().chain(self.noisy.iter()) {
            if v.len() != d {
                return Err(CoreError::shape(
                    "sample_source",
                    format!("mixed dimensions: {} vs {}", v.len(), d),
                ));
            }
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    pub total: f64,
    pub clean_term: f64,
    pub noisy_term: f64,
    pub penalty_term: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss: f64,
    pub clean_term: f64,
    pub noisy_term: f64,
    pub penalty_term: f64,
    pub val_psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub reg: DcRegularizer,
    pub log: Vec<EpochRow>,
    /// `mean_holdout_noisy R - mean_holdout_clean R` at the selected
    /// checkpoint; training has failed its purpose when this is negative.
    pub separation_holdout: f64,
    pub best_epoch: Option<usize>,
    pub aborted: Option<String>,
}

impl TrainResult {
    pub fn is_separated(&self) -> bool {
        self.separation_holdout >= 0.0
    }
}

pub type GradStore = BTreeMap<String, Tensor>;

// ---------------------------------------------------------------------------
// Loss graph

/// Prebuilt loss graph for a fixed batch width.
pub(crate) struct ArLossGraph {
    graph: Graph,
    d: usize,
    b: usize,
    mode: DcMode,
    loss: NodeId,
    clean_term: NodeId,
    noisy_term: NodeId,
    pen_term: NodeId,
    param_ids: Vec<(String, NodeId)>,
}

fn collect_leaf_ids(out: &mut Vec<(String, NodeId)>, prefix: &str, nodes: &NetParamNodes) {
    for (i, (w, wt, b)) in nodes.layers.iter().enumerate() {
        if let Some(w) = w {
            out.push((format!("{prefix}w{i}"), *w));
        }
        out.push((format!("{prefix}wt{i}"), *wt));
        out.push((format!("{prefix}b{i}"), *b));
    }
    out.push((format!("{prefix}hw"), nodes.head_w));
    out.push((format!("{prefix}hb"), nodes.head_b));
}

impl ArLossGraph {
    pub(crate) fn new(reg: &DcRegularizer, b: usize, lambda: f64) -> Result<Self> {
        if b == 0 {
            return Err(CoreError::contract("ar_loss", "empty batch".into()));
        }
        let d = reg.input_dim();
        let mut g = Graph::new();
        let xc = g.leaf("xc", d, b);
        let xn = g.leaf("xn", d, b);
        let xt = g.leaf("xt", d, b);

        let p1 = declare_param_leaves(&mut g, "r1.", &reg.r1);
        let p2 = reg
            .r2
            .as_ref()
            .map(|r2| declare_param_leaves(&mut g, "r2.", r2));

        let mut param_ids = Vec::new();
        collect_leaf_ids(&mut param_ids, "r1.", &p1);
        if let Some(p2) = &p2 {
            collect_leaf_ids(&mut param_ids, "r2.", p2);
        }

        // R(x) per column for a batch node, as `r1 - r2` on the tape.
        let score_of = |g: &mut Graph, x: NodeId| -> Result<NodeId> {
            let s1 = build_net_from(g, &p1, &reg.r1, x)?;
            match (&reg.mode, &p2) {
                (DcMode::Dc, Some(p2n)) => {
                    let s2 = build_net_from(g, p2n, reg.r2.as_ref().expect("dc mode"), x)?;
                    g.sub(s1.score, s2.score)
                }
                (DcMode::ConvexOnly, _) => Ok(s1.score),
                (DcMode::WeaklyConvex { rho }, _) => {
                    let xx = g.mul(x, x)?;
                    let sq = g.col_sum(xx);
                    let q = g.scale(sq, 0.5 * rho);
                    g.sub(s1.score, q)
                }
                (DcMode::Dc, None) => Err(CoreError::contract(
                    "ar_loss",
                    "dc mode without second network".into(),
                )),
            }
        };

        let sc = score_of(&mut g, xc)?;
        let sn = score_of(&mut g, xn)?;

        let sum_c = g.sum_all(sc);
        let clean_term = g.scale(sum_c, 1.0 / b as f64);
        let sum_n = g.sum_all(sn);
        let noisy_term = g.scale(sum_n, 1.0 / b as f64);

        // Penalty: ||∇_x R(xt)|| per column via the unrolled recursion.
        let ones_row = g.konst(Tensor::filled(1, b, 1.0));
        let t1 = build_net_from(&mut g, &p1, &reg.r1, xt)?;
        let g1 = build_input_grad(&mut g, &p1, &reg.r1, &t1, ones_row)?;
        let grad_field = match (&reg.mode, &p2) {
            (DcMode::Dc, Some(p2n)) => {
                let t2 = build_net_from(&mut g, p2n, reg.r2.as_ref().expect("dc mode"), xt)?;
                let g2 = build_input_grad(&mut g, p2n, reg.r2.as_ref().expect("dc mode"), &t2, ones_row)?;
                g.sub(g1, g2)?
            }
            (DcMode::ConvexOnly, _) => g1,
            (DcMode::WeaklyConvex { rho }, _) => {
                let rx = g.scale(xt, *rho);
                g.sub(g1, rx)?
            }
            (DcMode::Dc, None) => unreachable!("validated above"),
        };
        let gg = g.mul(grad_field, grad_field)?;
        let nsq = g.col_sum(gg);
        let nrm = g.unary(nsq, UnaryFn::SqrtGuarded);
        let shifted = g.shift(nrm, -1.0);
        let hinge = g.unary(shifted, UnaryFn::Relu);
        let hsq = g.mul(hinge, hinge)?;
        let pen_sum = g.sum_all(hsq);
        let pen_term = g.scale(pen_sum, 1.0 / b as f64);

        let diff = g.sub(clean_term, noisy_term)?;
        let pen_scaled = g.scale(pen_term, lambda);
        let loss = g.add(diff, pen_scaled)?;

        Ok(ArLossGraph {
            graph: g,
            d,
            b,
            mode: reg.mode,
            loss,
            clean_term,
            noisy_term,
            pen_term,
            param_ids,
        })
    }

    /// One evaluation: binds current parameters and the three batches,
    /// returns the loss terms and parameter gradients.
    pub(crate) fn run(
        &self,
        reg: &DcRegularizer,
        xc: &Tensor,
        xn: &Tensor,
        xt: &Tensor,
    ) -> Result<(LossTerms, GradStore)> {
        debug_assert_eq!(reg.mode, self.mode);
        for (t, name) in [(xc, "xc"), (xn, "xn"), (xt, "xt")] {
            if t.shape() != (self.d, self.b) {
                return Err(CoreError::shape(
                    "ar_loss",
                    format!(
                        "batch `{name}` is {}x{}, graph expects {}x{}",
                        t.rows(),
                        t.cols(),
                        self.d,
                        self.b
                    ),
                ));
            }
        }
        let mut binds: Vec<(String, &Tensor)> = Vec::new();
        collect_param_refs(&mut binds, "r1.", &reg.r1);
        if let Some(r2) = &reg.r2 {
            collect_param_refs(&mut binds, "r2.", r2);
        }
        let mut bind_refs: Vec<(&str, &Tensor)> = binds
            .iter()
            .map(|(n, t)| (n.as_str(), *t))
            .collect();
        bind_refs.push(("xc", xc));
        bind_refs.push(("xn", xn));
        bind_refs.push(("xt", xt));

        let ev = self.graph.forward(&bind_refs)?;
        let terms = LossTerms {
            total: ev.value(self.loss).item()?,
            clean_term: ev.value(self.clean_term).item()?,
            noisy_term: ev.value(self.noisy_term).item()?,
            penalty_term: ev.value(self.pen_term).item()?,
        };
        if !terms.total.is_finite() {
            return Err(CoreError::non_finite(
                "ar_loss",
                format!(
                    "loss is not finite (clean {}, noisy {}, penalty {})",
                    terms.clean_term, terms.noisy_term, terms.penalty_term
                ),
            ));
        }
        let grads = self.graph.backward(&ev, self.loss, &Tensor::scalar(1.0))?;
        let mut store = GradStore::new();
        for (name, id) in &self.param_ids {
            let gt = grads
                .wrt(*id)
                .expect("declared leaves always receive gradients")
                .clone();
            store.insert(name.clone(), gt);
        }
        Ok((terms, store))
    }
}

/// Critic loss and parameter gradients for one batch pair. Batches must
/// share the dimension `d` and (for interpolated penalties) the same length.
pub fn ar_loss(
    reg: &DcRegularizer,
    clean: &[&[f64]],
    noisy: &[&[f64]],
    lambda: f64,
    penalty_at: PenaltyAt,
    rng: &mut Rng,
) -> Result<(LossTerms, GradStore)> {
    if clean.is_empty() || noisy.is_empty() {
        return Err(CoreError::contract("ar_loss", "empty batch".into()));
    }
    if clean.len() != noisy.len() {
        return Err(CoreError::shape(
            "ar_loss",
            format!("clean batch {} vs noisy batch {}", clean.len(), noisy.len()),
        ));
    }
    let b = clean.len();
    let graph = ArLossGraph::new(reg, b, lambda)?;
    let xc = Tensor::from_columns(clean)?;
    let xn = Tensor::from_columns(noisy)?;
    let xt = penalty_points(&xc, &xn, penalty_at, rng);
    graph.run(reg, &xc, &xn, &xt)
}

fn penalty_points(xc: &Tensor, xn: &Tensor, at: PenaltyAt, rng: &mut Rng) -> Tensor {
    match at {
        PenaltyAt::Clean => xc.clone(),
        PenaltyAt::Noisy => xn.clone(),
        PenaltyAt::Interpolate => {
            let (d, b) = xc.shape();
            let us: Vec<f64> = (0..b).map(|_| rng.uniform()).collect();
            let mut t = Tensor::zeros(d, b);
            for i in 0..d {
                for j in 0..b {
                    let u = us[j];
                    t.set(i, j, u * xc.get(i, j) + (1.0 - u) * xn.get(i, j));
                }
            }
            t
        }
    }
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
    m: Tensor,
    v: Tensor,
}

struct Optimizer {
    kind: Optim,
    lr: f64,
    step: u64,
    state: BTreeMap<String, AdamState>,
}

impl Optimizer {
    fn new(kind: Optim, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    fn begin_step(&mut self) {
        self.step += 1;
    }

    fn update(&mut self, name: &str, p: &mut Tensor, g: &Tensor) {
        match self.kind {
            Optim::Sgd => {
                for (pi, gi) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *pi -= self.lr * gi;
                }
            }
            Optim::Adam { beta1, beta2, eps } => {
                let st = self.state.entry(name.to_string()).or_insert_with(|| AdamState {
                    m: Tensor::zeros(g.rows(), g.cols()),
                    v: Tensor::zeros(g.rows(), g.cols()),
                });
                let bc1 = 1.0 - crate::fp::powf(beta1, self.step as f64);
                let bc2 = 1.0 - crate::fp::powf(beta2, self.step as f64);
                for i in 0..g.len() {
                    let gi = g.as_slice()[i];
                    let m = &mut st.m.as_mut_slice()[i];
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    let v = &mut st.v.as_mut_slice()[i];
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    p.as_mut_slice()[i] -= self.lr * mhat / (crate::fp::sqrt(vhat) + eps);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop

/// Optional validation scorer: higher is better (reconstruction PSNR on a
/// small held-out protocol). When present, the best-scoring epoch's
/// parameters are returned.
pub type ValScorer<'a> = dyn FnMut(&DcRegularizer) -> Result<f64> + 'a;

pub fn train(
    initial: &DcRegularizer,
    src: &SampleSource,
    cfg: &TrainConfig,
    mut val: Option<&mut ValScorer<'_>>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let d = src.dim()?;
    if d != initial.input_dim() {
        return Err(CoreError::shape(
            "train",
            format!("data dim {} vs network dim {}", d, initial.input_dim()),
        ));
    }

    let mut reg = initial.clone();
    let mut rng = Rng::new(cfg.seed);

    // Deterministic holdout split. When the pools are index-paired (equal
    // length — the reconstruction pipelines emit noisy[i] from clean[i]),
    // both sides share one index set so pool-level sampling noise cancels
    // out of the separation statistic.
    let split = |pool_len: usize, rng: &mut Rng| -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..pool_len).collect();
        rng.shuffle(&mut idx);
        let k = ((pool_len as f64) * cfg.holdout_frac) as usize;
        let held = idx[..k].to_vec();
        let rest = idx[k..].to_vec();
        (held, rest)
    };
    let (held_c, train_c) = split(src.clean.len(), &mut rng);
    let (held_n, train_n) = if src.noisy.len() == src.clean.len() {
        (held_c.clone(), train_c.clone())
    } else {
        split(src.noisy.len(), &mut rng)
    };

    let b = cfg.batch_size.min(train_c.len()).min(train_n.len());
    if b == 0 {
        return Err(CoreError::contract(
            "train",
            "not enough samples left after the holdout split".into(),
        ));
    }
    let graph = ArLossGraph::new(&reg, b, cfg.lambda_gp)?;
    let mut opt = Optimizer::new(cfg.optim, cfg.lr);

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut aborted = None;
    let mut best: Option<(f64, usize, DcRegularizer)> = None;

    let mut order_c = train_c.clone();
    let mut order_n = train_n.clone();
    let mut cols_c: Vec<&[f64]> = Vec::with_capacity(b);
    let mut cols_n: Vec<&[f64]> = Vec::with_capacity(b);

    'epochs: for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order_c);
        rng.shuffle(&mut order_n);
        let batches = order_c.len().min(order_n.len()) / b;
        let mut acc = LossTerms::default();
        let mut count = 0usize;

        for bi in 0..batches.max(1) {
            if batches == 0 {
                break;
            }
            cols_c.clear();
            cols_n.clear();
            for k in 0..b {
                cols_c.push(&src.clean[order_c[bi * b + k]]);
                cols_n.push(&src.noisy[order_n[bi * b + k]]);
            }
            let xc = Tensor::from_columns(&cols_c)?;
            let xn = Tensor::from_columns(&cols_n)?;
            let xt = penalty_points(&xc, &xn, cfg.penalty_at, &mut rng);

            let (terms, grads) = match graph.run(&reg, &xc, &xn, &xt) {
                Ok(v) => v,
                Err(CoreError::NonFinite { detail, .. }) => {
                    aborted = Some(format!("epoch {epoch}, batch {bi}: {detail}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if crate::fp::abs(terms.total) > cfg.abort_loss {
                aborted = Some(format!(
                    "epoch {epoch}, batch {bi}: loss {} exceeded {}",
                    terms.total, cfg.abort_loss
                ));
                break 'epochs;
            }

            opt.begin_step();
            reg.visit_params_mut(&mut |name, t, _| {
                if let Some(g) = grads.get(&name) {
                    opt.update(&name, t, g);
                }
            });
            reg.project_nonneg_mut();

            acc.total += terms.total;
            acc.clean_term += terms.clean_term;
            acc.noisy_term += terms.noisy_term;
            acc.penalty_term += terms.penalty_term;
            count += 1;
        }

        let inv = 1.0 / count.max(1) as f64;
        let mut row = EpochRow {
            epoch,
            loss: acc.total * inv,
            clean_term: acc.clean_term * inv,
            noisy_term: acc.noisy_term * inv,
            penalty_term: acc.penalty_term * inv,
            val_psnr: None,
        };
        if let Some(scorer) = val.as_deref_mut() {
            if cfg.val_every > 0 && (epoch % cfg.val_every == 0 || epoch + 1 == cfg.epochs) {
                let score = scorer(&reg)?;
                row.val_psnr = Some(score);
                let better = best.as_ref().map_or(true, |(s, _, _)| score > *s);
                if better {
                    best = Some((score, epoch, reg.clone()));
                }
            }
        }
        log.push(row);
    }

    let mut best_epoch = None;
    if let Some((_, e, snapshot)) = best {
        best_epoch = Some(e);
        reg = snapshot;
    }

    let separation = separation_statistic(&reg, src, &held_c, &held_n)?;
    Ok(TrainResult {
        reg,
        log,
        separation_holdout: separation,
        best_epoch,
        aborted,
    })
}

/// `mean R(noisy) - mean R(clean)` over the given index sets (falls back to
/// the full pools when a side is empty).
fn separation_statistic(
    reg: &DcRegularizer,
    src: &SampleSource,
    held_c: &[usize],
    held_n: &[usize],
) -> Result<f64> {
    let ev = crate::icnn::DcEvaluator::new(reg)?;
    let mean_over = |pool: &Vec<Vec<f64>>, idx: &[usize]| -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        if idx.is_empty() {
            for v in pool.iter() {
                sum += ev.eval(v)?;
                count += 1;
            }
        } else {
            for &i in idx {
                sum += ev.eval(&pool[i])?;
                count += 1;
            }
        }
        Ok(sum / count.max(1) as f64)
    };
    Ok(mean_over(&src.noisy, held_n)? - mean_over(&src.clean, held_c)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::autodiff::finite_diff_gradient;
    use crate::icnn::{Activation, IcnnParams, ParamTag};
    use crate::la;

    fn tiny_source(d: usize, n: usize, gap: f64, seed: u64) -> SampleSource {
        // Clean near the origin, noisy shifted by `gap` — easily separated.
        let mut rng = Rng::new(seed);
        let clean = (0..n)
            .map(|_| (0..d).map(|_| rng.normal() * 0.3).collect())
            .collect();
        let noisy = (0..n)
            .map(|_| (0..d).map(|_| rng.normal() * 0.3 + gap).collect())
            .collect();
        SampleSource { clean, noisy }
    }

    #[test]
    fn zero_network_identical_batches_zero_loss() {
        let mut r1 = IcnnParams::new_random(2, 3, 2, Activation::Relu, 1).unwrap();
        let mut zero = |_n: alloc::string::String, t: &mut Tensor, _tag: ParamTag| {
            for v in t.as_mut_slice() {
                *v = 0.0;
            }
        };
        r1.visit_params_mut("", &mut zero);
        let reg = DcRegularizer::convex_only(r1);
        let batch: Vec<Vec<f64>> = vec![vec![0.5, -0.3], vec![1.0, 2.0]];
        let refs: Vec<&[f64]> = batch.iter().map(|v| v.as_slice()).collect();
        let mut rng = Rng::new(3);
        let (terms, _) =
            ar_loss(&reg, &refs, &refs, 10.0, PenaltyAt::Interpolate, &mut rng).unwrap();
        assert_eq!(terms.total, 0.0);
        assert_eq!(terms.penalty_term, 0.0);
    }

    #[test]
    fn linear_regularizer_penalty_is_lambda() {
        // R(x) = <c, x> with ||c|| = 2 ⇒ penalty = λ (2 - 1)² = λ.
        let mut r1 = IcnnParams::new_random(2, 1, 1, Activation::LeakyRelu { slope: 1.0 }, 1)
            .unwrap();
        r1.layers[0].w_tilde.as_mut_slice().copy_from_slice(&[2.0, 0.0]);
        r1.layers[0].bias.as_mut_slice()[0] = 0.0;
        r1.head_w.as_mut_slice()[0] = 1.0;
        r1.head_b = Tensor::scalar(0.0);
        let reg = DcRegularizer::convex_only(r1);
        let batch: Vec<Vec<f64>> = vec![vec![0.1, 0.2], vec![-0.4, 0.8], vec![2.0, -1.0]];
        let refs: Vec<&[f64]> = batch.iter().map(|v| v.as_slice()).collect();
        let lambda = 7.5;
        let mut rng = Rng::new(5);
        let (terms, _) =
            ar_loss(&reg, &refs, &refs, lambda, PenaltyAt::Interpolate, &mut rng).unwrap();
        assert!((terms.penalty_term - 1.0).abs() < 1e-12);
        assert!((terms.total - lambda).abs() < 1e-12);
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        // Full loss including the penalty's second-order path, softplus net.
        let r1 = IcnnParams::new_random(2, 3, 2, Activation::Softplus { beta: 1.0 }, 21).unwrap();
        let r2 = IcnnParams::new_random(2, 3, 2, Activation::Softplus { beta: 1.0 }, 22).unwrap();
        let reg = DcRegularizer::dc(r1, r2).unwrap();
        let clean: Vec<Vec<f64>> = vec![vec![0.3, -0.8], vec![1.1, 0.4]];
        let noisy: Vec<Vec<f64>> = vec![vec![-0.5, 0.2], vec![0.9, -1.3]];
        let crefs: Vec<&[f64]> = clean.iter().map(|v| v.as_slice()).collect();
        let nrefs: Vec<&[f64]> = noisy.iter().map(|v| v.as_slice()).collect();
        let lambda = 3.0;

        let loss_of = |r: &DcRegularizer| -> f64 {
            let mut rng = Rng::new(77);
            let (t, _) =
                ar_loss(r, &crefs, &nrefs, lambda, PenaltyAt::Interpolate, &mut rng).unwrap();
            t.total
        };

        let mut rng = Rng::new(77);
        let (_, grads) =
            ar_loss(&reg, &crefs, &nrefs, lambda, PenaltyAt::Interpolate, &mut rng).unwrap();

        // Flatten parameters, perturb one coordinate at a time.
        let mut names = Vec::new();
        reg.visit_params(&mut |name, t, _| names.push((name, t.len())));
        for (name, len) in names.iter() {
            // Only spot-check a few coordinates per tensor to keep it quick.
            let picks = [0usize, len.saturating_sub(1)];
            for &k in picks.iter() {
                if k >= *len {
                    continue;
                }
                let fval = |delta: f64| {
                    let mut r = reg.clone();
                    r.visit_params_mut(&mut |n, t, _| {
                        if &n == name {
                            t.as_mut_slice()[k] += delta;
                        }
                    });
                    loss_of(&r)
                };
                let h = 1e-5;
                let fd = (fval(h) - fval(-h)) / (2.0 * h);
                let an = grads[name].as_slice()[k];
                let denom = 1.0f64.max(fd.abs());
                assert!(
                    (fd - an).abs() / denom < 1e-4,
                    "{name}[{k}]: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn zero_epochs_leaves_parameters_untouched() {
        let r1 = IcnnParams::new_random(2, 4, 2, Activation::LeakyRelu { slope: 0.2 }, 3).unwrap();
        let r2 = IcnnParams::new_random(2, 4, 2, Activation::LeakyRelu { slope: 0.2 }, 4).unwrap();
        let reg = DcRegularizer::dc(r1, r2).unwrap();
        let src = tiny_source(2, 30, 3.0, 9);
        let cfg = TrainConfig::new(10.0, 1e-3, 8, 0, 1);
        let out = train(&reg, &src, &cfg, None).unwrap();
        assert_eq!(out.reg, reg);
    }

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let r1 = IcnnParams::new_random(2, 4, 2, Activation::LeakyRelu { slope: 0.2 }, 3).unwrap();
        let r2 = IcnnParams::new_random(2, 4, 2, Activation::LeakyRelu { slope: 0.2 }, 4).unwrap();
        let reg = DcRegularizer::dc(r1, r2).unwrap();
        let src = tiny_source(2, 40, 3.0, 9);
        let cfg = TrainConfig::new(10.0, 1e-3, 8, 5, 123);
        let a = train(&reg, &src, &cfg, None).unwrap();
        let b = train(&reg, &src, &cfg, None).unwrap();
        assert_eq!(a.reg, b.reg);
        assert!(a.aborted.is_none());
    }

    #[test]
    fn projection_invariant_holds_after_every_epoch() {
        let r1 = IcnnParams::new_random(2, 5, 3, Activation::LeakyRelu { slope: 0.2 }, 31).unwrap();
        let r2 = IcnnParams::new_random(2, 5, 3, Activation::LeakyRelu { slope: 0.2 }, 32).unwrap();
        let reg = DcRegularizer::dc(r1, r2).unwrap();
        let src = tiny_source(2, 40, 2.0, 10);
        let cfg = TrainConfig::new(5.0, 5e-3, 8, 6, 2);
        let out = train(&reg, &src, &cfg, None).unwrap();
        assert!(crate::icnn::is_nonneg(&out.reg.r1));
        assert!(crate::icnn::is_nonneg(out.reg.r2.as_ref().unwrap()));
    }

    #[test]
    fn training_separates_shifted_blobs() {
        let r1 = IcnnParams::new_random(2, 8, 2, Activation::LeakyRelu { slope: 0.2 }, 41).unwrap();
        let reg = DcRegularizer::convex_only(r1);
        let src = tiny_source(2, 80, 4.0, 11);
        let mut cfg = TrainConfig::new(10.0, 2e-3, 16, 40, 5);
        cfg.holdout_frac = 0.2;
        let out = train(&reg, &src, &cfg, None).unwrap();
        assert!(out.aborted.is_none());
        assert!(
            out.separation_holdout > 0.0,
            "separation {}",
            out.separation_holdout
        );
    }

    #[test]
    fn penalty_gradient_on_linear_net_matches_closed_form() {
        // R(x) = <c, x>: penalty is λ(||c|| - 1)₊², its gradient in c is
        // λ · 2(||c|| - 1)₊ · c/||c||.
        let mut r1 =
            IcnnParams::new_random(2, 1, 1, Activation::LeakyRelu { slope: 1.0 }, 1).unwrap();
        r1.layers[0].w_tilde.as_mut_slice().copy_from_slice(&[1.5, -2.0]);
        r1.layers[0].bias.as_mut_slice()[0] = 0.0;
        r1.head_w.as_mut_slice()[0] = 1.0;
        r1.head_b = Tensor::scalar(0.0);
        let reg = DcRegularizer::convex_only(r1.clone());
        let batch: Vec<Vec<f64>> = vec![vec![0.0, 0.0]];
        let refs: Vec<&[f64]> = batch.iter().map(|v| v.as_slice()).collect();
        let lambda = 2.0;
        let mut rng = Rng::new(1);
        let (_, grads) = ar_loss(&reg, &refs, &refs, lambda, PenaltyAt::Clean, &mut rng).unwrap();
        let c = [1.5, -2.0];
        let norm = la::norm2(&c);
        let coef = lambda * 2.0 * (norm - 1.0) / norm;
        let expect = [coef * c[0], coef * c[1]];
        let got = grads["r1.wt0"].as_slice();
        assert!((got[0] - expect[0]).abs() < 1e-10, "{got:?} vs {expect:?}");
        assert!((got[1] - expect[1]).abs() < 1e-10);

        // cross-check against central differences through the full loss
        let fd = finite_diff_gradient(
            |w| {
                let mut r = r1.clone();
                r.layers[0].w_tilde.as_mut_slice().copy_from_slice(w);
                let rr = DcRegularizer::convex_only(r);
                let mut rng = Rng::new(1);
                ar_loss(&rr, &refs, &refs, lambda, PenaltyAt::Clean, &mut rng)
                    .unwrap()
                    .0
                    .total
            },
            &c,
            1e-6,
        )
        .unwrap();
        assert!((fd[0] - expect[0]).abs() < 1e-5);
        assert!((fd[1] - expect[1]).abs() < 1e-5);
    }
}
