//! Desk-scale experiment harnesses: the double-spiral denoising study, small
//! simulated parallel-beam CT, image metrics and the inner-loop ablation.
//!
//! Runs are deterministic functions of their seeds: the same configuration
//! reproduces every metric bit for bit.

use crate::error::CoreError;
use crate::fp;
use crate::icnn::{Activation, DcEvaluator, DcMode, DcRegularizer, IcnnParams};
use crate::la;
use crate::linops::{build_radon, op_norm, pseudo_inverse_init, simulate, LinearOp, RadonGeometry};
use crate::rng::Rng;
use crate::solve::{
    solve_dca, solve_gd, solve_psm, Constants, Inner, NullStopwatch, Objective, SolverConfig,
    Term, X0,
};
use crate::train::{train, SampleSource, TrainConfig, TrainResult};
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

// ---------------------------------------------------------------------------
// Double spiral

#[derive(Debug, Clone)]
pub struct SpiralDataset {
    pub clean: Vec<[f64; 2]>,
    pub noisy: Vec<[f64; 2]>,
    pub labels: Vec<u8>,
    pub sigma: f64,
    pub seed: u64,
}

/// Parametric curve: `θ = √u · 2π`, `r = 2θ + π`; the second arm is the
/// first rotated by π.
pub fn spiral_point(u: f64, label: u8) -> [f64; 2] {
    let theta = fp::sqrt(u) * fp::TAU;
    let r = 2.0 * theta + fp::PI;
    let phase = theta + if label == 1 { fp::PI } else { 0.0 };
    [r * fp::cos(phase), r * fp::sin(phase)]
}

/// Two interleaved noisy spirals, `count/2` points each, isotropic Gaussian
/// noise of standard deviation `sigma` added to the retained clean copy.
pub fn gen_spiral(count: usize, sigma: f64, seed: u64) -> Result<SpiralDataset> {
    if count % 2 != 0 {
        return Err(CoreError::contract(
            "gen_spiral",
            format!("count must be even, got {count}"),
        ));
    }
    let mut rng = Rng::new(seed);
    let mut clean = Vec::with_capacity(count);
    let mut noisy = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i >= count / 2) as u8;
        let u = rng.uniform();
        let p = spiral_point(u, label);
        clean.push(p);
        labels.push(label);
    }
    for p in &clean {
        noisy.push([p[0] + sigma * rng.normal(), p[1] + sigma * rng.normal()]);
    }
    Ok(SpiralDataset {
        clean,
        noisy,
        labels,
        sigma,
        seed,
    })
}

/// Min Euclidean distance from `x` to the clean point cloud (the brute-force
/// stand-in for the manifold distance).
pub fn distance_to_manifold(clean: &[[f64; 2]], x: &[f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for p in clean {
        let dx = p[0] - x[0];
        let dy = p[1] - x[1];
        let d = dx * dx + dy * dy;
        if d < best {
            best = d;
        }
    }
    fp::sqrt(best)
}

#[derive(Debug, Clone, Copy)]
pub struct FitGrid {
    pub lo: f64,
    pub hi: f64,
    pub res: usize,
}

/// Mean squared difference between the affinely normalized regularizer field
/// and the affinely normalized distance field on a square grid. The critic
/// loss pins the regularizer only up to scale and shift, hence the
/// normalization; a constant field is degenerate and reported as an error.
pub fn regularizer_fit_error(
    ev: &DcEvaluator,
    clean: &[[f64; 2]],
    grid: &FitGrid,
) -> Result<f64> {
    if grid.res < 2 {
        return Err(CoreError::contract("fit_error", "grid needs at least 2 nodes".into()));
    }
    let res = grid.res;
    let mut rfield = Vec::with_capacity(res * res);
    let mut dfield = Vec::with_capacity(res * res);
    for i in 0..res {
        let y = grid.lo + (grid.hi - grid.lo) * i as f64 / (res - 1) as f64;
        for j in 0..res {
            let x = grid.lo + (grid.hi - grid.lo) * j as f64 / (res - 1) as f64;
            rfield.push(ev.eval(&[x, y])?);
            dfield.push(distance_to_manifold(clean, &[x, y]));
        }
    }
    let zscore = |v: &mut Vec<f64>| -> Result<()> {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        if var < 1e-24 {
            return Err(CoreError::contract(
                "fit_error",
                "field is constant on the grid; cannot normalize".into(),
            ));
        }
        let std = fp::sqrt(var);
        for x in v.iter_mut() {
            *x = (*x - mean) / std;
        }
        Ok(())
    };
    zscore(&mut rfield)?;
    zscore(&mut dfield)?;
    let mse = rfield
        .iter()
        .zip(&dfield)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / rfield.len() as f64;
    Ok(mse)
}

// ---------------------------------------------------------------------------
// Phantoms

#[derive(Debug, Clone)]
pub struct ImageGrid {
    pub n: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhantomKind {
    SheppLoganLike,
    RandomEllipses,
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    phi: f64,
    intensity: f64,
}

fn render_ellipses(n: usize, ellipses: &[Ellipse]) -> ImageGrid {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        // pixel centers on [-1, 1]^2, row 0 at the top
        let y = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        for j in 0..n {
            let x = -1.0 + (2.0 * j as f64 + 1.0) / n as f64;
            let mut v = 0.0;
            for e in ellipses {
                let dx = x - e.cx;
                let dy = y - e.cy;
                let c = fp::cos(e.phi);
                let s = fp::sin(e.phi);
                let u = (c * dx + s * dy) / e.a;
                let w = (-s * dx + c * dy) / e.b;
                if u * u + w * w <= 1.0 {
                    v += e.intensity;
                }
            }
            data[i * n + j] = v.clamp(0.0, 1.0);
        }
    }
    ImageGrid { n, data }
}

/// Piecewise-constant ellipse phantom in `[0, 1]`, deterministic per seed.
pub fn gen_phantom(n: usize, kind: PhantomKind, seed: u64) -> ImageGrid {
    match kind {
        PhantomKind::SheppLoganLike => {
            let es = [
                Ellipse { cx: 0.0, cy: 0.0, a: 0.72, b: 0.92, phi: 0.0, intensity: 0.8 },
                Ellipse { cx: 0.0, cy: -0.02, a: 0.66, b: 0.87, phi: 0.0, intensity: -0.3 },
                Ellipse { cx: 0.22, cy: 0.0, a: 0.11, b: 0.31, phi: -0.3, intensity: 0.25 },
                Ellipse { cx: -0.22, cy: 0.0, a: 0.16, b: 0.41, phi: 0.3, intensity: 0.25 },
                Ellipse { cx: 0.0, cy: 0.35, a: 0.21, b: 0.25, phi: 0.0, intensity: 0.3 },
                Ellipse { cx: 0.0, cy: -0.45, a: 0.04, b: 0.04, phi: 0.0, intensity: 0.35 },
                Ellipse { cx: -0.08, cy: -0.6, a: 0.046, b: 0.023, phi: 0.0, intensity: 0.35 },
            ];
            render_ellipses(n, &es)
        }
        PhantomKind::RandomEllipses => {
            let mut rng = Rng::new(seed);
            let mut es = vec![Ellipse {
                cx: 0.0,
                cy: 0.0,
                a: 0.85,
                b: 0.85,
                phi: 0.0,
                intensity: 0.45,
            }];
            let k = 3 + rng.below(4);
            for _ in 0..k {
                es.push(Ellipse {
                    cx: rng.range(-0.5, 0.5),
                    cy: rng.range(-0.5, 0.5),
                    a: rng.range(0.08, 0.4),
                    b: rng.range(0.08, 0.4),
                    phi: rng.range(0.0, fp::PI),
                    intensity: rng.range(-0.4, 0.5),
                });
            }
            render_ellipses(n, &es)
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
}

/// `10 log10(peak² / mse)`, capped at 99 dB (zero MSE reports the cap).
pub fn psnr(x: &[f64], reference: &[f64], peak: f64) -> Result<f64> {
    if x.len() != reference.len() || x.is_empty() {
        return Err(CoreError::shape(
            "psnr",
            format!("lengths {} vs {}", x.len(), reference.len()),
        ));
    }
    let mse = x
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(99.0);
    }
    Ok((10.0 * fp::log10(peak * peak / mse)).min(99.0))
}

/// Single-scale SSIM: 11x11 Gaussian window (σ = 1.5), `k₁ = 0.01`,
/// `k₂ = 0.03`, averaged over valid (fully interior) window positions.
/// Separable filtering; images must be at least 11x11.
pub fn ssim(x: &[f64], reference: &[f64], n: usize, peak: f64) -> Result<f64> {
    if x.len() != n * n || reference.len() != n * n {
        return Err(CoreError::shape(
            "ssim",
            format!("expected {0}x{0} images", n),
        ));
    }
    if n < 11 {
        return Err(CoreError::contract(
            "ssim",
            format!("image side {n} smaller than the 11x11 window"),
        ));
    }
    let mut w = [0.0f64; 11];
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *wi = fp::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += *wi;
    }
    for wi in w.iter_mut() {
        *wi /= sum;
    }

    // separable weighted filtering: rows then columns, valid region only
    let m = n - 10;
    let filt = |img: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
        let mut tmp = vec![0.0; n * m]; // rows filtered: n rows, m cols
        for i in 0..n {
            for j in 0..m {
                let mut s = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    s += wk * img(i, j + k);
                }
                tmp[i * m + j] = s;
            }
        }
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    s += wk * tmp[(i + k) * m + j];
                }
                out[i * m + j] = s;
            }
        }
        out
    };

    let gx = |i: usize, j: usize| x[i * n + j];
    let gr = |i: usize, j: usize| reference[i * n + j];
    let mu_x = filt(&gx);
    let mu_r = filt(&gr);
    let xx = filt(&|i, j| gx(i, j) * gx(i, j));
    let rr = filt(&|i, j| gr(i, j) * gr(i, j));
    let xr = filt(&|i, j| gx(i, j) * gr(i, j));

    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let mut total = 0.0;
    for idx in 0..m * m {
        let mx = mu_x[idx];
        let mr = mu_r[idx];
        let vx = xx[idx] - mx * mx;
        let vr = rr[idx] - mr * mr;
        let cov = xr[idx] - mx * mr;
        total += ((2.0 * mx * mr + c1) * (2.0 * cov + c2))
            / ((mx * mx + mr * mr + c1) * (vx + vr + c2));
    }
    Ok(total / (m * m) as f64)
}

pub fn metrics(x: &[f64], reference: &[f64], n: usize, peak: f64) -> Result<Metrics> {
    Ok(Metrics {
        psnr: psnr(x, reference, peak)?,
        ssim: ssim(x, reference, n, peak)?,
    })
}

// ---------------------------------------------------------------------------
// Spiral study (three regularizer classes on the same data)

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegClass {
    ConvexOnly,
    WeaklyConvex,
    Dc,
}

impl RegClass {
    pub fn label(self) -> &'static str {
        match self {
            RegClass::ConvexOnly => "icnn",
            RegClass::WeaklyConvex => "iwcnn",
            RegClass::Dc => "idcnn",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpiralStudyCfg {
    pub count: usize,
    pub sigma: f64,
    pub data_seed: u64,
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    /// Curvature of the fixed quadratic in weakly-convex mode.
    pub rho: f64,
    pub train: TrainConfig,
    /// Training/initialization seeds; one run per seed and class.
    pub seeds: Vec<u64>,
    pub grid: FitGrid,
    /// Denoising weight used by the validation scorer (checkpoint selection).
    pub val_mu: f64,
    /// Number of extra generated pairs reserved for validation; 0 disables
    /// checkpoint selection.
    pub val_points: usize,
}

impl SpiralStudyCfg {
    pub fn desk_default() -> Self {
        SpiralStudyCfg {
            count: 1000,
            sigma: 1.0,
            data_seed: 17,
            width: 96,
            depth: 3,
            activation: Activation::LeakyRelu { slope: 0.2 },
            rho: 0.3,
            train: TrainConfig::new(1.0, 1e-3, 25, 60, 1),
            seeds: vec![1, 2, 3],
            grid: FitGrid {
                lo: -18.0,
                hi: 18.0,
                res: 49,
            },
            val_mu: 0.5,
            val_points: 32,
        }
    }
}

/// Checkpoint-selection scorer for denoising problems: mean PSNR of quick
/// gradient-descent denoisings of held-out noisy points.
pub fn denoise_val_scorer<'a>(
    clean_val: &'a [Vec<f64>],
    noisy_val: &'a [Vec<f64>],
    mu: f64,
) -> impl FnMut(&DcRegularizer) -> Result<f64> + 'a {
    move |reg: &DcRegularizer| -> Result<f64> {
        let d = reg.input_dim();
        let op = LinearOp::identity(d);
        let ev = DcEvaluator::new(reg)?;
        let consts = Constants::new(1.0, 1.0, 1.0);
        let mut acc = 0.0;
        for (c, y) in clean_val.iter().zip(noisy_val) {
            let r2_term = match (&reg.mode, &ev.e2) {
                (DcMode::Dc, Some(e2)) => Term::Net(e2),
                (DcMode::WeaklyConvex { rho }, _) => Term::SqHalf { rho: *rho },
                _ => Term::Zero,
            };
            let obj = Objective::new(&op, y, Term::Net(&ev.e1), r2_term, mu)?;
            let scfg = SolverConfig::gd(30).with_x0(X0::Custom(y.clone()));
            let trace = solve_gd(&obj, &scfg, &consts, &mut NullStopwatch)?;
            // peak chosen as the spiral diameter scale
            acc += psnr(&trace.x, c, 32.0)?;
        }
        Ok(acc / clean_val.len().max(1) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SpiralRun {
    pub class: RegClass,
    pub seed: u64,
    pub fit_error: f64,
    pub separation: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SpiralStudyReport {
    pub runs: Vec<SpiralRun>,
}

impl SpiralStudyReport {
    pub fn median_fit(&self, class: RegClass) -> f64 {
        let mut v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.class == class)
            .map(|r| r.fit_error)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite fit errors"));
        if v.is_empty() {
            return f64::NAN;
        }
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }
}

/// Head weights start at 1/20 of their usual scale so a fresh critic sits
/// inside the 1-Lipschitz band (otherwise the gradient penalty flattens the
/// network before the separation terms can shape it).
const CRITIC_HEAD_SCALE: f64 = 0.05;

pub fn build_regularizer(
    class: RegClass,
    input_dim: usize,
    width: usize,
    depth: usize,
    activation: Activation,
    rho: f64,
    seed: u64,
) -> Result<DcRegularizer> {
    let r1 = IcnnParams::new_random_scaled(
        input_dim,
        width,
        depth,
        activation,
        seed,
        CRITIC_HEAD_SCALE,
    )?;
    match class {
        RegClass::ConvexOnly => Ok(DcRegularizer::convex_only(r1)),
        RegClass::WeaklyConvex => DcRegularizer::weakly_convex(r1, rho),
        RegClass::Dc => {
            let r2 = IcnnParams::new_random_scaled(
                input_dim,
                width,
                depth,
                activation,
                seed ^ 0x9e37_79b9,
                CRITIC_HEAD_SCALE,
            )?;
            DcRegularizer::dc(r1, r2)
        }
    }
}

/// Trains one regularizer per class and seed on the same spiral data and
/// scores each against the ground-truth distance field.
pub fn run_spiral_study(cfg: &SpiralStudyCfg) -> Result<SpiralStudyReport> {
    let data = gen_spiral(cfg.count, cfg.sigma, cfg.data_seed)?;
    let src = SampleSource {
        clean: data.clean.iter().map(|p| p.to_vec()).collect(),
        noisy: data.noisy.iter().map(|p| p.to_vec()).collect(),
    };
    let mut runs = Vec::new();
    for &class in &[RegClass::ConvexOnly, RegClass::WeaklyConvex, RegClass::Dc] {
        for &seed in &cfg.seeds {
            let reg0 = build_regularizer(
                class,
                2,
                cfg.width,
                cfg.depth,
                cfg.activation,
                cfg.rho,
                seed,
            )?;
            let mut tcfg = cfg.train.clone();
            tcfg.seed = cfg.train.seed ^ (seed.wrapping_mul(0x1000_0001));
            let out: TrainResult = if cfg.val_points > 0 {
                let val = gen_spiral(
                    2 * ((cfg.val_points + 1) / 2),
                    cfg.sigma,
                    cfg.data_seed ^ 0x5a5a_5a5a,
                )?;
                let clean_val: Vec<Vec<f64>> =
                    val.clean.iter().map(|p| p.to_vec()).collect();
                let noisy_val: Vec<Vec<f64>> =
                    val.noisy.iter().map(|p| p.to_vec()).collect();
                let mut scorer = denoise_val_scorer(&clean_val, &noisy_val, cfg.val_mu);
                train(&reg0, &src, &tcfg, Some(&mut scorer))?
            } else {
                train(&reg0, &src, &tcfg, None)?
            };
            if let Some(reason) = &out.aborted {
                return Err(CoreError::non_finite(
                    "spiral_study",
                    format!("{} seed {seed}: {reason}", class.label()),
                ));
            }
            let ev = DcEvaluator::new(&out.reg)?;
            let fit = regularizer_fit_error(&ev, &data.clean, &cfg.grid)?;
            runs.push(SpiralRun {
                class,
                seed,
                fit_error: fit,
                separation: out.separation_holdout,
                final_loss: out.log.last().map_or(f64::NAN, |r| r.loss),
            });
        }
    }
    Ok(SpiralStudyReport { runs })
}

// ---------------------------------------------------------------------------
// CT experiment

#[derive(Debug, Clone, Copy)]
pub struct SolverBudget {
    pub t: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuRule {
    /// Gradient-magnitude matching over the training reconstructions.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct CtExperimentCfg {
    pub geom: RadonGeometry,
    pub phantom_kind: PhantomKind,
    /// Per-phantom noise std as a fraction of the mean |sinogram| value.
    pub noise_rel: f64,
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
    pub phantom_seed: u64,
    pub noise_seed: u64,
    pub ridge: f64,
    pub mu: MuRule,
    pub tv_mu: MuRule,
    pub gd: SolverBudget,
    pub dca: SolverBudget,
    pub psm: SolverBudget,
    /// Smoothness stand-in for kinked activations in step-size rules.
    pub l_const: f64,
}

impl CtExperimentCfg {
    pub fn desk_sparse(n: usize, num_angles: usize) -> Result<Self> {
        Ok(CtExperimentCfg {
            geom: RadonGeometry::new(n, num_angles, RadonGeometry::default_rays(n), 0.0)?,
            phantom_kind: PhantomKind::RandomEllipses,
            noise_rel: 0.01,
            num_train: 300,
            num_val: 4,
            num_test: 10,
            phantom_seed: 1000,
            noise_seed: 2000,
            ridge: 1e-4,
            mu: MuRule::Fixed(5.0),
            tv_mu: MuRule::Fixed(0.3),
            gd: SolverBudget { t: 500, n: 1 },
            dca: SolverBudget { t: 500, n: 5 },
            psm: SolverBudget { t: 500, n: 1 },
            l_const: 1.0,
        })
    }

    pub fn desk_limited(n: usize, num_angles: usize, wedge_deg: f64) -> Result<Self> {
        let mut cfg = CtExperimentCfg::desk_sparse(n, num_angles)?;
        cfg.geom = RadonGeometry::new(n, num_angles, RadonGeometry::default_rays(n), wedge_deg)?;
        cfg.dca.n = 6;
        Ok(cfg)
    }
}

/// One simulated acquisition: ground truth, measurement, noise level and the
/// ridge reconstruction.
#[derive(Debug, Clone)]
pub struct CtCase {
    pub phantom: ImageGrid,
    pub y: Vec<f64>,
    pub sigma: f64,
    pub pinv: Vec<f64>,
}

/// Deterministically rebuilds case `index` of the experiment stream.
pub fn ct_case(op: &LinearOp, cfg: &CtExperimentCfg, index: usize) -> Result<CtCase> {
    let phantom = gen_phantom(
        cfg.geom.n,
        cfg.phantom_kind,
        cfg.phantom_seed.wrapping_add(index as u64),
    );
    let clean_sino = op.apply(&phantom.data);
    let mean_abs =
        clean_sino.iter().map(|v| fp::abs(*v)).sum::<f64>() / clean_sino.len().max(1) as f64;
    let sigma = cfg.noise_rel * mean_abs;
    let meas = simulate(op, &phantom.data, sigma, cfg.noise_seed.wrapping_add(index as u64))?;
    let pinv = pseudo_inverse_init(op, &meas.y, cfg.ridge, 400)?;
    Ok(CtCase {
        phantom,
        y: meas.y,
        sigma,
        pinv: pinv.x,
    })
}

/// Training pools for the experiment: clean phantom images and the ridge
/// reconstructions of their noisy sinograms.
pub fn ct_training_source(cfg: &CtExperimentCfg) -> Result<(LinearOp, SampleSource)> {
    let op = build_radon(&cfg.geom)?;
    let mut clean = Vec::with_capacity(cfg.num_train);
    let mut noisy = Vec::with_capacity(cfg.num_train);
    for i in 0..cfg.num_train {
        let case = ct_case(&op, cfg, i)?;
        clean.push(case.phantom.data);
        noisy.push(case.pinv);
    }
    Ok((op, SampleSource { clean, noisy }))
}

/// Gradient-magnitude matching weight: `mean ||A^T(A x̂ - y)||` over the
/// training reconstructions.
fn mu_auto(op: &LinearOp, cfg: &CtExperimentCfg) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..cfg.num_train {
        let case = ct_case(op, cfg, i)?;
        let mut r = op.apply(&case.pinv);
        for (ri, yi) in r.iter_mut().zip(&case.y) {
            *ri -= yi;
        }
        acc += la::norm2(&op.adjoint(&r));
    }
    Ok(acc / cfg.num_train.max(1) as f64)
}

fn tv_mu_auto(op: &LinearOp, cfg: &CtExperimentCfg, mu_data: f64) -> Result<f64> {
    // match the data-term gradient against the TV subgradient magnitude
    let n = cfg.geom.n;
    let tv = Term::TvAniso { n };
    let mut acc = 0.0;
    for i in 0..cfg.num_train.min(8) {
        let case = ct_case(op, cfg, i)?;
        acc += la::norm2(&tv.subgrad(&case.pinv)?);
    }
    let denom = (acc / cfg.num_train.min(8).max(1) as f64).max(1e-12);
    Ok(mu_data / denom)
}

#[derive(Debug, Clone)]
pub struct CtRow {
    pub method: String,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl CtRow {
    pub fn psnr_mean(&self) -> f64 {
        self.psnr.iter().sum::<f64>() / self.psnr.len().max(1) as f64
    }

    pub fn ssim_mean(&self) -> f64 {
        self.ssim.iter().sum::<f64>() / self.ssim.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct CtReport {
    /// Rows in fixed order: pinv, tv, adcr, adcr-dca, adcr-psm.
    pub rows: Vec<CtRow>,
    pub mu: f64,
    pub tv_mu: f64,
    pub a_norm: f64,
    pub sigmas: Vec<f64>,
    /// Ground truth and per-method reconstructions of the first test case,
    /// for image export.
    pub sample_recons: Vec<(String, Vec<f64>)>,
}

impl CtReport {
    pub fn row(&self, method: &str) -> Option<&CtRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Reconstructs the held-out phantoms with the ridge baseline, TV via the
/// proximal path, and the learned regularizer under all three solvers.
pub fn run_ct_experiment(reg: &DcRegularizer, cfg: &CtExperimentCfg) -> Result<CtReport> {
    let op = build_radon(&cfg.geom)?;
    let n = cfg.geom.n;
    if reg.input_dim() != n * n {
        return Err(CoreError::shape(
            "run_ct_experiment",
            format!("regularizer dim {} vs image dim {}", reg.input_dim(), n * n),
        ));
    }
    let a_norm = op_norm(&op, 120)?;

    let mu = match cfg.mu {
        MuRule::Fixed(v) => v,
        MuRule::Auto => mu_auto(&op, cfg)?,
    };
    let tv_mu = match cfg.tv_mu {
        MuRule::Fixed(v) => v,
        MuRule::Auto => tv_mu_auto(&op, cfg, mu)?,
    };

    let ev = DcEvaluator::new(reg)?;
    let smooth = reg.r1.layers.iter().all(|l| l.activation.is_smooth());
    let (l1_hat, l2_hat) = if smooth {
        let box_lo = vec![-0.2; n * n];
        let box_hi = vec![1.2; n * n];
        let e1 = crate::icnn::estimate_smoothness(&reg.r1, &box_lo, &box_hi, 60, 77)?;
        let e2 = match (&reg.mode, &reg.r2) {
            (DcMode::Dc, Some(r2)) => {
                crate::icnn::estimate_smoothness(r2, &box_lo, &box_hi, 60, 78)?.l_hat
            }
            (DcMode::WeaklyConvex { rho }, _) => *rho,
            _ => 0.0,
        };
        (e1.l_hat, e2)
    } else {
        (cfg.l_const, cfg.l_const)
    };
    let consts = Constants::new(a_norm, l1_hat, l2_hat);

    let mut rows: Vec<CtRow> = ["pinv", "tv", "adcr", "adcr-dca", "adcr-psm"]
        .iter()
        .map(|m| CtRow {
            method: String::from(*m),
            psnr: Vec::new(),
            ssim: Vec::new(),
        })
        .collect();
    let mut sigmas = Vec::new();
    let mut sample_recons: Vec<(String, Vec<f64>)> = Vec::new();

    let first_test = cfg.num_train + cfg.num_val;
    for k in 0..cfg.num_test {
        let case = ct_case(&op, cfg, first_test + k)?;
        sigmas.push(case.sigma);
        let truth = &case.phantom.data;
        let push = |rows: &mut Vec<CtRow>, idx: usize, rec: &[f64]| -> Result<()> {
            let m = metrics(rec, truth, n, 1.0)?;
            rows[idx].psnr.push(m.psnr);
            rows[idx].ssim.push(m.ssim);
            Ok(())
        };

        if k == 0 {
            sample_recons.push((String::from("truth"), truth.clone()));
            sample_recons.push((String::from("pinv"), case.pinv.clone()));
        }
        push(&mut rows, 0, &case.pinv)?;

        // TV through the same proximal machinery as the learned variants.
        let tv_obj = Objective::new(&op, &case.y, Term::TvAniso { n }, Term::Zero, tv_mu)?;
        let tv_cfg = SolverConfig::psm(cfg.psm.t, cfg.psm.n)
            .with_x0(X0::Custom(case.pinv.clone()));
        let tv_trace = solve_psm(&tv_obj, &tv_cfg, &consts, &mut NullStopwatch)?;
        if k == 0 {
            sample_recons.push((String::from("tv"), tv_trace.x.clone()));
        }
        push(&mut rows, 1, &tv_trace.x)?;

        let r2_term = match (&reg.mode, &ev.e2) {
            (DcMode::Dc, Some(e2)) => Term::Net(e2),
            (DcMode::WeaklyConvex { rho }, _) => Term::SqHalf { rho: *rho },
            _ => Term::Zero,
        };

        let obj = Objective::new(&op, &case.y, Term::Net(&ev.e1), r2_term, mu)?;
        let gd_cfg = SolverConfig::gd(cfg.gd.t).with_x0(X0::Custom(case.pinv.clone()));
        let gd_trace = solve_gd(&obj, &gd_cfg, &consts, &mut NullStopwatch)?;
        if k == 0 {
            sample_recons.push((String::from("adcr"), gd_trace.x.clone()));
        }
        push(&mut rows, 2, &gd_trace.x)?;

        let dca_cfg = SolverConfig::dca(cfg.dca.t, cfg.dca.n)
            .with_x0(X0::Custom(case.pinv.clone()));
        let dca_trace = solve_dca(&obj, &dca_cfg, &consts, &mut NullStopwatch)?;
        if k == 0 {
            sample_recons.push((String::from("adcr-dca"), dca_trace.x.clone()));
        }
        push(&mut rows, 3, &dca_trace.x)?;

        let psm_cfg = SolverConfig::psm(cfg.psm.t, cfg.psm.n)
            .with_x0(X0::Custom(case.pinv.clone()))
            .with_inner(Inner::Steps(cfg.psm.n.max(8)));
        let psm_trace = solve_psm(&obj, &psm_cfg, &consts, &mut NullStopwatch)?;
        if k == 0 {
            sample_recons.push((String::from("adcr-psm"), psm_trace.x.clone()));
        }
        push(&mut rows, 4, &psm_trace.x)?;
    }

    Ok(CtReport {
        rows,
        mu,
        tv_mu,
        a_norm,
        sigmas,
        sample_recons,
    })
}

/// Validation scorer for training-time checkpoint selection: mean PSNR of
/// quick gradient-descent reconstructions of the validation cases.
pub fn ct_val_scorer<'a>(
    op: &'a LinearOp,
    cfg: &'a CtExperimentCfg,
    mu: f64,
    a_norm: f64,
) -> impl FnMut(&DcRegularizer) -> Result<f64> + 'a {
    move |reg: &DcRegularizer| -> Result<f64> {
        let ev = DcEvaluator::new(reg)?;
        let consts = Constants::new(a_norm, cfg.l_const, cfg.l_const);
        let mut acc = 0.0;
        for k in 0..cfg.num_val.max(1) {
            let case = ct_case(op, cfg, cfg.num_train + k)?;
            let r2_term = match (&reg.mode, &ev.e2) {
                (DcMode::Dc, Some(e2)) => Term::Net(e2),
                (DcMode::WeaklyConvex { rho }, _) => Term::SqHalf { rho: *rho },
                _ => Term::Zero,
            };
            let obj = Objective::new(op, &case.y, Term::Net(&ev.e1), r2_term, mu)?;
            let scfg = SolverConfig::gd(40).with_x0(X0::Custom(case.pinv.clone()));
            let trace = solve_gd(&obj, &scfg, &consts, &mut NullStopwatch)?;
            acc += psnr(&trace.x, &case.phantom.data, 1.0)?;
        }
        Ok(acc / cfg.num_val.max(1) as f64)
    }
}

// ---------------------------------------------------------------------------
// Ablation

#[derive(Debug, Clone)]
pub enum AblateAxis {
    /// Inner gradient steps of the DCA surrogate.
    DcaInner(Vec<usize>),
    /// Proximal strength as a multiple (>= 1) of the automatic `1/α`.
    PsmGammaFactor(Vec<f64>),
}

#[derive(Debug, Clone, Copy)]
pub struct AblateRow {
    pub value: f64,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
}

/// Sweeps one solver hyperparameter over the test cases; everything else is
/// pinned by `cfg`.
pub fn run_ct_ablation(
    reg: &DcRegularizer,
    cfg: &CtExperimentCfg,
    axis: &AblateAxis,
) -> Result<Vec<AblateRow>> {
    let op = build_radon(&cfg.geom)?;
    let n = cfg.geom.n;
    let a_norm = op_norm(&op, 120)?;
    let mu = match cfg.mu {
        MuRule::Fixed(v) => v,
        MuRule::Auto => mu_auto(&op, cfg)?,
    };
    let ev = DcEvaluator::new(reg)?;
    let consts = Constants::new(a_norm, cfg.l_const, cfg.l_const);
    let first_test = cfg.num_train + cfg.num_val;

    let values: Vec<f64> = match axis {
        AblateAxis::DcaInner(ns) => ns.iter().map(|v| *v as f64).collect(),
        AblateAxis::PsmGammaFactor(fs) => fs.clone(),
    };
    if values.is_empty() {
        return Err(CoreError::contract("ablate", "empty sweep".into()));
    }

    let mut rows = Vec::with_capacity(values.len());
    for &value in &values {
        let mut ps = Vec::new();
        let mut ss = Vec::new();
        for k in 0..cfg.num_test {
            let case = ct_case(&op, cfg, first_test + k)?;
            let r2_term = match (&reg.mode, &ev.e2) {
                (DcMode::Dc, Some(e2)) => Term::Net(e2),
                (DcMode::WeaklyConvex { rho }, _) => Term::SqHalf { rho: *rho },
                _ => Term::Zero,
            };
            let obj = Objective::new(&op, &case.y, Term::Net(&ev.e1), r2_term, mu)?;
            let trace = match axis {
                AblateAxis::DcaInner(_) => {
                    let scfg = SolverConfig::dca(cfg.dca.t, value as usize)
                        .with_x0(X0::Custom(case.pinv.clone()));
                    solve_dca(&obj, &scfg, &consts, &mut NullStopwatch)?
                }
                AblateAxis::PsmGammaFactor(_) => {
                    let alpha = 1.0 / (consts.a2_safe * value);
                    let scfg =
                        SolverConfig::psm_checked(cfg.psm.t, cfg.psm.n, alpha, consts.a2_safe)?
                            .with_x0(X0::Custom(case.pinv.clone()));
                    solve_psm(&obj, &scfg, &consts, &mut NullStopwatch)?
                }
            };
            let m = metrics(&trace.x, &case.phantom.data, n, 1.0)?;
            ps.push(m.psnr);
            ss.push(m.ssim);
        }
        rows.push(AblateRow {
            value,
            psnr_mean: ps.iter().sum::<f64>() / ps.len().max(1) as f64,
            ssim_mean: ss.iter().sum::<f64>() / ss.len().max(1) as f64,
        });
    }
    Ok(rows)
}
