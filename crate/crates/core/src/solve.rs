//! Variational reconstruction `F(x) = ½||Ax - y||² + μ(R₁(x) - R₂(x))` by
//! subgradient descent, DCA and a proximal subgradient method, with the
//! convergence inequalities of those schemes turned into executable
//! certificates.
//!
//! Conventions:
//!
//! * `μ` scales both convex parts, so the DC structure survives reweighting.
//! * The recorded "gradient" is always the selection `∇L + μg₁ - μg₂`.
//! * Rate certificates substitute the best objective value seen along the
//!   trace for the unknown infimum. The substitution only shrinks the
//!   right-hand side, so a pass is a strict certificate. Gradient (or step)
//!   terms are averaged over iterates that have a successor, which is exactly
//!   the range the telescoping argument controls.
//! * The proximal step with strength `γ = 1/α` solves
//!   `min_z (γ/2)||v - z||² + μR₁(z)`; with the hand-crafted `ℓ₁` choice this
//!   reduces to soft thresholding and the iteration coincides with ISTA.

use crate::error::CoreError;
use crate::fp;
use crate::icnn::IcnnEvaluator;
use crate::la;
use crate::linops::{pseudo_inverse_init, LinearOp};
use crate::Result;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

// ---------------------------------------------------------------------------
// Convex terms

/// One convex component of a DC objective. Hand-crafted terms carry closed
/// or fast proximal maps; learned terms are ICNN evaluators.
pub enum Term<'a> {
    Zero,
    /// `||x||₁`
    L1,
    /// `||x||₂` (convex; the usual concave part of the `ℓ₁ - ℓ₂` model)
    EuclideanNorm,
    /// `(rho/2) ||x||²`
    SqHalf { rho: f64 },
    /// Anisotropic total variation of an `n x n` image.
    TvAniso { n: usize },
    /// Learned convex network.
    Net(&'a IcnnEvaluator),
}

impl<'a> Term<'a> {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Term::Zero => 0.0,
            Term::L1 => la::norm1(x),
            Term::EuclideanNorm => la::norm2(x),
            Term::SqHalf { rho } => 0.5 * rho * la::dot(x, x),
            Term::TvAniso { n } => tv_value(x, *n),
            Term::Net(ev) => ev.eval(x)?,
        })
    }

    /// A deterministic subgradient selection (gradient where differentiable;
    /// 0 at the kink of the norms).
    pub fn subgrad(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Term::Zero => vec![0.0; x.len()],
            Term::L1 => x
                .iter()
                .map(|v| {
                    if *v > 0.0 {
                        1.0
                    } else if *v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            Term::EuclideanNorm => {
                let n = la::norm2(x);
                if n == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    x.iter().map(|v| v / n).collect()
                }
            }
            Term::SqHalf { rho } => x.iter().map(|v| rho * v).collect(),
            Term::TvAniso { n } => tv_subgrad(x, *n),
            Term::Net(ev) => ev.grad(x)?,
        })
    }

    /// Exact smoothness constant when one is intrinsic to the term.
    pub fn smooth_l(&self) -> Option<f64> {
        match self {
            Term::Zero => Some(0.0),
            Term::SqHalf { rho } => Some(*rho),
            _ => None,
        }
    }

    /// Closed-form `argmin_z (1/(2s))||v - z||² + s_term·term(z)` when one
    /// exists; the caller folds the weight into `s_term`.
    fn closed_prox(&self, v: &[f64], s_term: f64) -> Option<Vec<f64>> {
        match self {
            Term::Zero => Some(v.to_vec()),
            Term::L1 => Some(
                v.iter()
                    .map(|&x| {
                        if x > s_term {
                            x - s_term
                        } else if x < -s_term {
                            x + s_term
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            ),
            Term::EuclideanNorm => {
                let n = la::norm2(v);
                if n <= s_term {
                    Some(vec![0.0; v.len()])
                } else {
                    let c = 1.0 - s_term / n;
                    Some(v.iter().map(|x| c * x).collect())
                }
            }
            Term::SqHalf { rho } => {
                let c = 1.0 / (1.0 + s_term * rho);
                Some(v.iter().map(|x| c * x).collect())
            }
            _ => None,
        }
    }

    fn is_smooth_like(&self) -> bool {
        matches!(self, Term::Zero | Term::SqHalf { .. } | Term::Net(_))
    }
}

// Anisotropic TV helpers (forward differences, n x n image).

fn tv_value(x: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j + 1 < n {
                s += fp::abs(x[i * n + j + 1] - x[i * n + j]);
            }
            if i + 1 < n {
                s += fp::abs(x[(i + 1) * n + j] - x[i * n + j]);
            }
        }
    }
    s
}

fn tv_subgrad(x: &[f64], n: usize) -> Vec<f64> {
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if j + 1 < n {
                let s = sign(x[i * n + j + 1] - x[i * n + j]);
                g[i * n + j + 1] += s;
                g[i * n + j] -= s;
            }
            if i + 1 < n {
                let s = sign(x[(i + 1) * n + j] - x[i * n + j]);
                g[(i + 1) * n + j] += s;
                g[i * n + j] -= s;
            }
        }
    }
    g
}

/// Proximal map of `s_term * TV` by projected gradient on the dual.
fn tv_prox(v: &[f64], n: usize, s_term: f64, iters: usize) -> Vec<f64> {
    if s_term == 0.0 || n < 2 {
        return v.to_vec();
    }
    let ne = 2 * n * (n - 1);
    let mut p = vec![0.0; ne];
    // z = v - s D^T p ; dual ascent p <- clip(p + tau D z), ||D||² <= 8
    let tau = 1.0 / (8.0 * s_term);
    let mut z = v.to_vec();

    let apply_dt = |p: &[f64], v: &[f64], out: &mut Vec<f64>| {
        out.copy_from_slice(v);
        let mut e = 0;
        for i in 0..n {
            for j in 0..n {
                if j + 1 < n {
                    let pe = s_term * p[e];
                    out[i * n + j + 1] -= pe;
                    out[i * n + j] += pe;
                    e += 1;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i + 1 < n {
                    let pe = s_term * p[e];
                    out[(i + 1) * n + j] -= pe;
                    out[i * n + j] += pe;
                    e += 1;
                }
            }
        }
    };

    for _ in 0..iters {
        apply_dt(&p, v, &mut z);
        let mut e = 0;
        for i in 0..n {
            for j in 0..n {
                if j + 1 < n {
                    let d = z[i * n + j + 1] - z[i * n + j];
                    p[e] = (p[e] + tau * d).clamp(-1.0, 1.0);
                    e += 1;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i + 1 < n {
                    let d = z[(i + 1) * n + j] - z[i * n + j];
                    p[e] = (p[e] + tau * d).clamp(-1.0, 1.0);
                    e += 1;
                }
            }
        }
    }
    apply_dt(&p, v, &mut z);
    z
}

// ---------------------------------------------------------------------------
// Objective

/// `F(x) = ½||Ax - y||² + μ (r1(x) - r2(x))`.
pub struct Objective<'a> {
    pub op: &'a LinearOp,
    pub y: &'a [f64],
    pub r1: Term<'a>,
    pub r2: Term<'a>,
    pub mu: f64,
}

impl<'a> Objective<'a> {
    pub fn new(op: &'a LinearOp, y: &'a [f64], r1: Term<'a>, r2: Term<'a>, mu: f64) -> Result<Self> {
        if y.len() != op.out_dim() {
            return Err(CoreError::shape(
                "objective",
                format!("y has length {}, operator emits {}", y.len(), op.out_dim()),
            ));
        }
        if mu < 0.0 {
            return Err(CoreError::contract(
                "objective",
                format!("mu must be non-negative, got {mu}"),
            ));
        }
        if let Term::Net(ev) = &r1 {
            if ev.input_dim() != op.in_dim() {
                return Err(CoreError::shape(
                    "objective",
                    format!("r1 network dim {} vs operator dim {}", ev.input_dim(), op.in_dim()),
                ));
            }
        }
        if let Term::Net(ev) = &r2 {
            if ev.input_dim() != op.in_dim() {
                return Err(CoreError::shape(
                    "objective",
                    format!("r2 network dim {} vs operator dim {}", ev.input_dim(), op.in_dim()),
                ));
            }
        }
        Ok(Objective { op, y, r1, r2, mu })
    }

    pub fn dim(&self) -> usize {
        self.op.in_dim()
    }

    pub fn data_value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut r = self.op.apply(x);
        for (ri, yi) in r.iter_mut().zip(self.y) {
            *ri -= yi;
        }
        let val = 0.5 * la::dot(&r, &r);
        (val, self.op.adjoint(&r))
    }

    pub fn f(&self, x: &[f64]) -> Result<f64> {
        let mut r = self.op.apply(x);
        for (ri, yi) in r.iter_mut().zip(self.y) {
            *ri -= yi;
        }
        Ok(0.5 * la::dot(&r, &r) + self.mu * (self.r1.eval(x)? - self.r2.eval(x)?))
    }

    /// Selection gradient `∇L + μg₁ - μg₂`.
    pub fn sel_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, mut g) = self.data_value_grad(x);
        let g1 = self.r1.subgrad(x)?;
        let g2 = self.r2.subgrad(x)?;
        for i in 0..g.len() {
            g[i] += self.mu * (g1[i] - g2[i]);
        }
        Ok(g)
    }
}

/// Value and gradient of the data-fidelity term `½||Ax - y||²` alone.
pub fn data_fidelity(op: &LinearOp, y: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if y.len() != op.out_dim() || x.len() != op.in_dim() {
        return Err(CoreError::shape(
            "data_fidelity",
            format!(
                "x: {} (want {}), y: {} (want {})",
                x.len(),
                op.in_dim(),
                y.len(),
                op.out_dim()
            ),
        ));
    }
    let mut r = op.apply(x);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    Ok((0.5 * la::dot(&r, &r), op.adjoint(&r)))
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algo {
    Gd,
    Dca,
    Psm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1/(1.01||A||² + μL̂₁)` for gd, `1/(1.01||A||²)` for psm.
    Auto,
    Fixed(f64),
}

/// Inner-loop policy for the DCA surrogate and the network prox.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inner {
    /// A fixed number of descent steps (the cheap inexact regime).
    Steps(usize),
    /// Iterate until the inner gradient norm falls below `tol` (the
    /// "exact" regime used by the certificates), capped at `max_iters`.
    ToTol { tol: f64, max_iters: usize },
}

impl Inner {
    pub fn exact() -> Self {
        Inner::ToTol {
            tol: 1e-12,
            max_iters: 200_000,
        }
    }

    pub fn exact_prox() -> Self {
        Inner::ToTol {
            tol: 1e-10,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum X0 {
    Zeros,
    /// Ridge-CG pseudo-inverse of `y`.
    PseudoInverse { ridge: f64 },
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algo: Algo,
    /// Outer iterations.
    pub t: usize,
    pub inner: Inner,
    pub alpha: StepRule,
    pub x0: X0,
    /// Optional early stop on `||x_t - x_{t-1}|| / max(||x_t||, eps) < rel`.
    pub early_stop_rel: Option<f64>,
    /// Record surrogate-majorization diagnostics (DCA only).
    pub diagnostics: bool,
}

impl SolverConfig {
    pub fn gd(t: usize) -> Self {
        SolverConfig {
            algo: Algo::Gd,
            t,
            inner: Inner::Steps(1),
            alpha: StepRule::Auto,
            x0: X0::Zeros,
            early_stop_rel: None,
            diagnostics: false,
        }
    }

    pub fn dca(t: usize, n: usize) -> Self {
        SolverConfig {
            algo: Algo::Dca,
            t,
            inner: Inner::Steps(n),
            alpha: StepRule::Auto,
            x0: X0::Zeros,
            early_stop_rel: None,
            diagnostics: false,
        }
    }

    pub fn psm(t: usize, n: usize) -> Self {
        SolverConfig {
            algo: Algo::Psm,
            t,
            inner: Inner::Steps(n),
            alpha: StepRule::Auto,
            x0: X0::Zeros,
            early_stop_rel: None,
            diagnostics: false,
        }
    }

    /// PSM with an explicit step size, rejected at construction when it
    /// exceeds `1/(1.01||A||²)` (the proximal strength is tied to `1/α`).
    pub fn psm_checked(t: usize, n: usize, alpha: f64, a2_safe: f64) -> Result<Self> {
        if alpha <= 0.0 || alpha > 1.0 / a2_safe {
            return Err(CoreError::contract(
                "solver_config",
                format!(
                    "psm step {alpha} outside (0, {:.6e}] = (0, 1/(1.01 ||A||^2)]",
                    1.0 / a2_safe
                ),
            ));
        }
        let mut cfg = SolverConfig::psm(t, n);
        cfg.alpha = StepRule::Fixed(alpha);
        Ok(cfg)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = StepRule::Fixed(alpha);
        self
    }

    pub fn with_inner(mut self, inner: Inner) -> Self {
        self.inner = inner;
        self
    }

    pub fn with_x0(mut self, x0: X0) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_diagnostics(mut self) -> Self {
        self.diagnostics = true;
        self
    }

    pub fn with_early_stop(mut self, rel: f64) -> Self {
        self.early_stop_rel = Some(rel);
        self
    }
}

/// Safeguarded constants feeding every step-size rule and certificate.
/// `l1_hat`/`l2_hat` are smoothness estimates of the *unscaled* `r1`/`r2`
/// (exact values are used automatically when the term carries one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    /// `1.01 * ||A||²` (overestimation safeguard already applied).
    pub a2_safe: f64,
    pub l1_hat: f64,
    pub l2_hat: f64,
}

impl Constants {
    pub fn new(op_norm_estimate: f64, l1_hat: f64, l2_hat: f64) -> Self {
        Constants {
            a2_safe: crate::linops::safe_norm_sq(op_norm_estimate),
            l1_hat,
            l2_hat,
        }
    }

    fn l1_for(&self, obj: &Objective<'_>) -> f64 {
        obj.r1.smooth_l().unwrap_or(self.l1_hat)
    }
}

// ---------------------------------------------------------------------------
// Traces

/// Wall-clock source for trace timestamps. The default reports zero so runs
/// stay bit-reproducible; callers with `std` can inject a real clock.
pub trait Stopwatch {
    fn elapsed_ms(&mut self) -> f64;
}

/// Always reports `0.0`.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullStopwatch;

impl Stopwatch for NullStopwatch {
    fn elapsed_ms(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub t: usize,
    pub f: f64,
    /// Norm of the selection gradient at `x_t`.
    pub grad_norm: f64,
    /// `||x_t - x_{t-1}||` (zero at t = 0).
    pub step_norm: f64,
    pub time_ms: f64,
}

/// Per-outer-step surrogate diagnostics (DCA).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcaStepDiag {
    /// `q(x_t; x_t)` — must equal `F(x_t)`.
    pub q_at_cur: f64,
    pub f_at_cur: f64,
    /// `q(x_{t+1}; x_t)` — must upper-bound `F(x_{t+1})`.
    pub q_at_next: f64,
    pub f_at_next: f64,
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub entries: Vec<TraceEntry>,
    pub x: Vec<f64>,
    pub aborted: Option<String>,
    pub dca_diag: Vec<DcaStepDiag>,
}

impl SolverTrace {
    pub fn final_f(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.f)
    }

    pub fn f0(&self) -> f64 {
        self.entries.first().map_or(f64::NAN, |e| e.f)
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn min_f(&self) -> f64 {
        self.entries.iter().fold(f64::INFINITY, |m, e| m.min(e.f))
    }
}

fn resolve_x0(obj: &Objective<'_>, cfg: &SolverConfig) -> Result<Vec<f64>> {
    Ok(match &cfg.x0 {
        X0::Zeros => vec![0.0; obj.dim()],
        X0::PseudoInverse { ridge } => {
            pseudo_inverse_init(obj.op, obj.y, *ridge, (4 * obj.dim()).max(50))?.x
        }
        X0::Custom(x) => {
            if x.len() != obj.dim() {
                return Err(CoreError::shape(
                    "solver_x0",
                    format!("custom x0 length {} vs dim {}", x.len(), obj.dim()),
                ));
            }
            x.clone()
        }
    })
}

struct TraceBuilder<'s> {
    entries: Vec<TraceEntry>,
    sw: &'s mut dyn Stopwatch,
}

impl<'s> TraceBuilder<'s> {
    fn push(&mut self, obj: &Objective<'_>, t: usize, x: &[f64], prev: Option<&[f64]>) -> Result<f64> {
        let f = obj.f(x)?;
        let g = obj.sel_grad(x)?;
        let step_norm = prev.map_or(0.0, |p| la::dist2(x, p));
        self.entries.push(TraceEntry {
            t,
            f,
            grad_norm: la::norm2(&g),
            step_norm,
            time_ms: self.sw.elapsed_ms(),
        });
        Ok(f)
    }
}

fn divergence_reason(f: f64, x: &[f64]) -> Option<String> {
    if !f.is_finite() || !la::all_finite(x) {
        Some("non-finite iterate".to_string())
    } else if f < -1e12 {
        Some("objective fell below -1e12; F is not bounded below here".to_string())
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Subgradient descent

/// `x_{t+1} = x_t - α (∇L(x_t) + μ g₁ - μ g₂)`.
pub fn solve_gd(
    obj: &Objective<'_>,
    cfg: &SolverConfig,
    consts: &Constants,
    sw: &mut dyn Stopwatch,
) -> Result<SolverTrace> {
    if cfg.algo != Algo::Gd {
        return Err(CoreError::contract(
            "solve_gd",
            "config built for another algorithm".into(),
        ));
    }
    let alpha = match cfg.alpha {
        StepRule::Auto => 1.0 / (consts.a2_safe + obj.mu * consts.l1_for(obj)),
        StepRule::Fixed(a) => a,
    };
    if alpha <= 0.0 {
        return Err(CoreError::contract(
            "solve_gd",
            format!("step must be positive, got {alpha}"),
        ));
    }

    let mut x = resolve_x0(obj, cfg)?;
    let mut tb = TraceBuilder {
        entries: Vec::with_capacity(cfg.t + 1),
        sw,
    };
    let mut aborted = None;
    tb.push(obj, 0, &x, None)?;
    for t in 0..cfg.t {
        let g = obj.sel_grad(&x)?;
        let mut xn = x.clone();
        la::axpy(-alpha, &g, &mut xn);
        let f = tb.push(obj, t + 1, &xn, Some(&x))?;
        if let Some(reason) = divergence_reason(f, &xn) {
            aborted = Some(reason);
            x = xn;
            break;
        }
        let stop = early_stop(cfg, &xn, &x);
        x = xn;
        if stop {
            break;
        }
    }
    Ok(SolverTrace {
        entries: tb.entries,
        x,
        aborted,
        dca_diag: Vec::new(),
    })
}

fn early_stop(cfg: &SolverConfig, xn: &[f64], x: &[f64]) -> bool {
    match cfg.early_stop_rel {
        Some(rel) => la::dist2(xn, x) / la::norm2(xn).max(1e-12) < rel,
        None => false,
    }
}

// ---------------------------------------------------------------------------
// DCA

/// Linearizes the concave part at `x_t` and descends the convex surrogate
/// `q(x; x_t) = ½||Ax - y||² + μ r1(x) - ⟨μ g₂(x_t), x⟩ + const` starting
/// from `x_t`. With `Inner::Steps(n)` the inner loop is `n` descent steps at
/// step size `1/(1.01||A||² + μ L̂₁)`; `Inner::ToTol` drives the surrogate
/// gradient (or gradient mapping) below a tolerance.
pub fn solve_dca(
    obj: &Objective<'_>,
    cfg: &SolverConfig,
    consts: &Constants,
    sw: &mut dyn Stopwatch,
) -> Result<SolverTrace> {
    if cfg.algo != Algo::Dca {
        return Err(CoreError::contract(
            "solve_dca",
            "config built for another algorithm".into(),
        ));
    }
    let mut x = resolve_x0(obj, cfg)?;
    let mut tb = TraceBuilder {
        entries: Vec::with_capacity(cfg.t + 1),
        sw,
    };
    let mut aborted = None;
    let mut diag = Vec::new();
    tb.push(obj, 0, &x, None)?;

    for t in 0..cfg.t {
        let g2 = obj.r2.subgrad(&x)?;
        let g2s: Vec<f64> = g2.iter().map(|v| obj.mu * v).collect();
        let xn = minimize_surrogate(obj, &x, &g2s, cfg.inner, consts)?;

        if cfg.diagnostics {
            let r2_at_cur = obj.mu * obj.r2.eval(&x)?;
            let q = |z: &[f64]| -> Result<f64> {
                let (lv, _) = data_fidelity(obj.op, obj.y, z)?;
                let lin = la::dot(&g2s, z) - la::dot(&g2s, &x);
                Ok(lv + obj.mu * obj.r1.eval(z)? - r2_at_cur - lin)
            };
            diag.push(DcaStepDiag {
                q_at_cur: q(&x)?,
                f_at_cur: obj.f(&x)?,
                q_at_next: q(&xn)?,
                f_at_next: obj.f(&xn)?,
            });
        }

        let f = tb.push(obj, t + 1, &xn, Some(&x))?;
        if let Some(reason) = divergence_reason(f, &xn) {
            aborted = Some(reason);
            x = xn;
            break;
        }
        let stop = early_stop(cfg, &xn, &x);
        x = xn;
        if stop {
            break;
        }
    }
    Ok(SolverTrace {
        entries: tb.entries,
        x,
        aborted,
        dca_diag: diag,
    })
}

/// Descends `q(x) = ½||Ax - y||² + μ r1(x) - ⟨g2s, x⟩` from `x_t`.
fn minimize_surrogate(
    obj: &Objective<'_>,
    x_t: &[f64],
    g2s: &[f64],
    inner: Inner,
    consts: &Constants,
) -> Result<Vec<f64>> {
    if obj.r1.is_smooth_like() {
        // Plain descent; the first step from x_t with this step size already
        // realizes the decrease the averaged certificate needs, and further
        // steps keep q monotone.
        let step = 1.0 / (consts.a2_safe + obj.mu * consts.l1_for(obj));
        let grad_q = |z: &[f64]| -> Result<Vec<f64>> {
            let (_, mut g) = obj.data_value_grad(z);
            let g1 = obj.r1.subgrad(z)?;
            for i in 0..g.len() {
                g[i] += obj.mu * g1[i] - g2s[i];
            }
            Ok(g)
        };
        let mut z = x_t.to_vec();
        match inner {
            Inner::Steps(n) => {
                for _ in 0..n.max(1) {
                    let g = grad_q(&z)?;
                    la::axpy(-step, &g, &mut z);
                }
            }
            Inner::ToTol { tol, max_iters } => {
                for _ in 0..max_iters {
                    let g = grad_q(&z)?;
                    if la::norm2(&g) <= tol {
                        break;
                    }
                    la::axpy(-step, &g, &mut z);
                }
            }
        }
        Ok(z)
    } else {
        // Composite surrogate: proximal-gradient steps on the smooth part
        // ½||Ax - y||² - ⟨g2s, x⟩ with r1 handled by its prox.
        let step = 1.0 / consts.a2_safe;
        let fb = |z: &[f64]| -> Result<Vec<f64>> {
            let (_, mut g) = obj.data_value_grad(z);
            for i in 0..g.len() {
                g[i] -= g2s[i];
            }
            let mut v = z.to_vec();
            la::axpy(-step, &g, &mut v);
            prox_of_r1(obj, &v, step, Inner::Steps(40), consts)
        };
        let mut z = x_t.to_vec();
        match inner {
            Inner::Steps(n) => {
                for _ in 0..n.max(1) {
                    z = fb(&z)?;
                }
            }
            Inner::ToTol { tol, max_iters } => {
                for _ in 0..max_iters {
                    let zn = fb(&z)?;
                    let mapping = la::dist2(&zn, &z) / step;
                    z = zn;
                    if mapping <= tol {
                        break;
                    }
                }
            }
        }
        Ok(z)
    }
}

// ---------------------------------------------------------------------------
// PSM

/// Forward step on the smooth/concave parts, proximal step on `μR₁`:
/// `x_{t+1} = prox(x_t - α(∇L(x_t) - μg₂(x_t)))` with proximal strength
/// `γ = 1/α`, i.e. the subproblem `min_z (γ/2)||v - z||² + μR₁(z)`.
pub fn solve_psm(
    obj: &Objective<'_>,
    cfg: &SolverConfig,
    consts: &Constants,
    sw: &mut dyn Stopwatch,
) -> Result<SolverTrace> {
    if cfg.algo != Algo::Psm {
        return Err(CoreError::contract(
            "solve_psm",
            "config built for another algorithm".into(),
        ));
    }
    let alpha = match cfg.alpha {
        StepRule::Auto => 1.0 / consts.a2_safe,
        StepRule::Fixed(a) => a,
    };
    if alpha <= 0.0 || alpha > 1.0 / consts.a2_safe {
        return Err(CoreError::contract(
            "solve_psm",
            format!(
                "step {alpha} outside (0, {:.6e}] = (0, 1/(1.01 ||A||^2)]",
                1.0 / consts.a2_safe
            ),
        ));
    }

    let mut x = resolve_x0(obj, cfg)?;
    let mut tb = TraceBuilder {
        entries: Vec::with_capacity(cfg.t + 1),
        sw,
    };
    let mut aborted = None;
    tb.push(obj, 0, &x, None)?;
    for t in 0..cfg.t {
        let (_, mut g) = obj.data_value_grad(&x);
        let g2 = obj.r2.subgrad(&x)?;
        for i in 0..g.len() {
            g[i] -= obj.mu * g2[i];
        }
        let mut v = x.clone();
        la::axpy(-alpha, &g, &mut v);
        let xn = prox_of_r1(obj, &v, alpha, cfg.inner, consts)?;
        let f = tb.push(obj, t + 1, &xn, Some(&x))?;
        if let Some(reason) = divergence_reason(f, &xn) {
            aborted = Some(reason);
            x = xn;
            break;
        }
        let stop = early_stop(cfg, &xn, &x);
        x = xn;
        if stop {
            break;
        }
    }
    Ok(SolverTrace {
        entries: tb.entries,
        x,
        aborted,
        dca_diag: Vec::new(),
    })
}

/// `argmin_z (1/(2s))||v - z||² + μ r1(z)`: closed form where available,
/// dual projected gradient for TV, and descent from `v` for networks (the
/// subproblem is `1/s`-strongly convex, so a tolerance is cheap to reach).
fn prox_of_r1(
    obj: &Objective<'_>,
    v: &[f64],
    s: f64,
    inner: Inner,
    consts: &Constants,
) -> Result<Vec<f64>> {
    let weight = obj.mu;
    if weight == 0.0 {
        return Ok(v.to_vec());
    }
    if let Some(z) = obj.r1.closed_prox(v, s * weight) {
        return Ok(z);
    }
    match &obj.r1 {
        Term::TvAniso { n } => {
            let iters = match inner {
                Inner::Steps(k) => 30.max(4 * k),
                Inner::ToTol { .. } => 300,
            };
            Ok(tv_prox(v, *n, s * weight, iters))
        }
        _ => {
            let step = 1.0 / (1.0 / s + weight * consts.l1_for(obj));
            let grad_phi = |z: &[f64]| -> Result<Vec<f64>> {
                let mut g = obj.r1.subgrad(z)?;
                for i in 0..g.len() {
                    g[i] = (z[i] - v[i]) / s + weight * g[i];
                }
                Ok(g)
            };
            let mut z = v.to_vec();
            match inner {
                Inner::Steps(n) => {
                    for _ in 0..n.max(1) {
                        let g = grad_phi(&z)?;
                        la::axpy(-step, &g, &mut z);
                    }
                }
                Inner::ToTol { tol, max_iters } => {
                    for _ in 0..max_iters {
                        let g = grad_phi(&z)?;
                        if la::norm2(&g) <= tol {
                            break;
                        }
                        la::axpy(-step, &g, &mut z);
                    }
                }
            }
            Ok(z)
        }
    }
}

// ---------------------------------------------------------------------------
// Certificates

/// One averaged-inequality check. The gradient/step average runs over
/// iterates that have a successor; the last objective value supplies the
/// floor substituted for the unknown infimum (only tightening the bound).
#[derive(Debug, Clone, Copy)]
pub struct RateReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub steps: usize,
    pub f0: f64,
    pub f_floor: f64,
    /// The multiplicative constant in the right-hand side.
    pub constant: f64,
}

/// Averaged stationarity certificate for DCA traces:
/// `mean_t ||∇F(x_t)||² ≤ 2(||A||² + L̂₁)(F(x₀) - F_floor)/steps`, with
/// `L̂₁` the smoothness of `μ·r1` (pass the scaled value).
pub fn check_dca_rate(trace: &SolverTrace, l1_hat_scaled: f64, a2: f64) -> RateReport {
    let steps = trace.steps();
    let constant = 2.0 * (a2 + l1_hat_scaled);
    if steps == 0 {
        return RateReport {
            lhs: 0.0,
            rhs: 0.0,
            pass: true,
            steps,
            f0: trace.f0(),
            f_floor: trace.final_f(),
            constant,
        };
    }
    let lhs = trace.entries[..steps]
        .iter()
        .map(|e| e.grad_norm * e.grad_norm)
        .sum::<f64>()
        / steps as f64;
    let f0 = trace.f0();
    let f_floor = trace.min_f();
    let rhs = constant * (f0 - f_floor) / steps as f64;
    RateReport {
        lhs,
        rhs,
        pass: lhs <= rhs,
        steps,
        f0,
        f_floor,
        constant,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PsmRateReport {
    /// Averaged squared step lengths vs `2α(F(x₀) - F_floor)/steps`.
    pub part1: RateReport,
    /// Averaged squared selection gradients (from `t = 1`) vs
    /// `2α(||A||² + L̂₂ + 1/α)²(F(x₀) - F_floor)/steps`. Meaningful when
    /// `μ·r2` is smooth.
    pub part2: RateReport,
    /// `min_t [(F(x_t) - F(x_{t+1})) - (1/2α)||x_t - x_{t+1}||²]`;
    /// non-negative up to the prox tolerance.
    pub min_decrease_margin: f64,
}

pub fn check_psm_rates(
    trace: &SolverTrace,
    l2_hat_scaled: f64,
    a2: f64,
    alpha: f64,
) -> PsmRateReport {
    let steps = trace.steps();
    let f0 = trace.f0();
    let f_floor = trace.min_f();
    let gap = f0 - f_floor;

    let (lhs1, lhs2, margin) = if steps == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut margin = f64::INFINITY;
        for t in 1..=steps {
            let e = &trace.entries[t];
            s1 += e.step_norm * e.step_norm;
            s2 += e.grad_norm * e.grad_norm;
            let decrease = trace.entries[t - 1].f - e.f;
            margin = margin.min(decrease - e.step_norm * e.step_norm / (2.0 * alpha));
        }
        (s1 / steps as f64, s2 / steps as f64, margin)
    };

    let c1 = 2.0 * alpha;
    let rhs1 = if steps == 0 { 0.0 } else { c1 * gap / steps as f64 };
    let m = a2 + l2_hat_scaled + 1.0 / alpha;
    let c2 = 2.0 * alpha * m * m;
    let rhs2 = if steps == 0 { 0.0 } else { c2 * gap / steps as f64 };

    PsmRateReport {
        part1: RateReport {
            lhs: lhs1,
            rhs: rhs1,
            pass: lhs1 <= rhs1,
            steps,
            f0,
            f_floor,
            constant: c1,
        },
        part2: RateReport {
            lhs: lhs2,
            rhs: rhs2,
            pass: lhs2 <= rhs2,
            steps,
            f0,
            f_floor,
            constant: c2,
        },
        min_decrease_margin: margin,
    }
}

/// Monotone-decrease check shared by DCA and PSM traces:
/// `F(x_{t+1}) ≤ F(x_t) + tol (1 + |F(x_t)|)` at every step.
pub fn check_monotone(trace: &SolverTrace, tol: f64) -> bool {
    trace
        .entries
        .windows(2)
        .all(|w| w[1].f <= w[0].f + tol * (1.0 + fp::abs(w[0].f)))
}
