//! Forward operators, adjoints, operator norms, measurement simulation and
//! ridge-regularized pseudo-inverse reconstruction.
//!
//! Operators are immutable after construction and safe to share across
//! threads. `apply`/`adjoint` panic on wrong input length (programming
//! error); the fallible entry points validate dimensions up front.

use crate::error::CoreError;
use crate::fp;
use crate::la;
use crate::rng::Rng;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Parallel-beam acquisition description for an `n x n` image.
///
/// Angles are spread uniformly over `[0°, 180°)`; a positive
/// `missing_wedge_deg` removes the trailing wedge (limited-view), so e.g. a
/// 60° wedge keeps two thirds of the angles. `missing_wedge_deg = 0` with few
/// angles is the sparse-view regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RadonGeometry {
    pub n: usize,
    pub num_angles: usize,
    pub rays_per_angle: usize,
    pub missing_wedge_deg: f64,
}

impl RadonGeometry {
    pub fn new(n: usize, num_angles: usize, rays_per_angle: usize, missing_wedge_deg: f64) -> Result<Self> {
        if num_angles < 1 {
            return Err(CoreError::contract("radon_geometry", "num_angles must be >= 1".into()));
        }
        if !(0.0..180.0).contains(&missing_wedge_deg) {
            return Err(CoreError::contract(
                "radon_geometry",
                format!("missing wedge must lie in [0, 180), got {missing_wedge_deg}"),
            ));
        }
        if rays_per_angle < 1 {
            return Err(CoreError::contract("radon_geometry", "rays_per_angle must be >= 1".into()));
        }
        if n < 1 || n > 128 {
            return Err(CoreError::contract(
                "radon_geometry",
                format!("image side must lie in [1, 128], got {n}"),
            ));
        }
        Ok(RadonGeometry {
            n,
            num_angles,
            rays_per_angle,
            missing_wedge_deg,
        })
    }

    /// Rays at unit spacing covering the image diagonal.
    pub fn default_rays(n: usize) -> usize {
        fp::ceil(n as f64 * core::f64::consts::SQRT_2) as usize + 1
    }
}

/// Distance between consecutive samples along a ray, in pixel units.
const RAY_STEP: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RadonOp {
    geom: RadonGeometry,
    kept_angles: usize,
    /// Per ray: indices of the pixels hit by its samples (one entry per
    /// sample, duplicates allowed). Ray value = RAY_STEP * sum of hits.
    rays: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
enum OpKind {
    Identity { dim: usize },
    /// Row-major `m x d`.
    Dense { m: usize, d: usize, a: Vec<f64> },
    Radon(RadonOp),
    /// Zero-padded "same" convolution on an `n x n` image with a `k x k`
    /// kernel (k odd). The adjoint correlates with the flipped kernel.
    Conv2d { n: usize, k: usize, kernel: Vec<f64> },
}

/// A linear forward operator with an exact adjoint.
#[derive(Debug, Clone)]
pub struct LinearOp {
    kind: OpKind,
}

impl LinearOp {
    pub fn identity(dim: usize) -> Self {
        LinearOp {
            kind: OpKind::Identity { dim },
        }
    }

    pub fn dense(m: usize, d: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != m * d {
            return Err(CoreError::shape(
                "linop.dense",
                format!("{m}x{d} needs {} entries, got {}", m * d, a.len()),
            ));
        }
        Ok(LinearOp {
            kind: OpKind::Dense { m, d, a },
        })
    }

    pub fn conv2d(n: usize, k: usize, kernel: Vec<f64>) -> Result<Self> {
        if k % 2 == 0 || kernel.len() != k * k {
            return Err(CoreError::shape(
                "linop.conv2d",
                format!("kernel must be odd square, got k={k} with {} entries", kernel.len()),
            ));
        }
        Ok(LinearOp {
            kind: OpKind::Conv2d { n, k, kernel },
        })
    }

    pub fn in_dim(&self) -> usize {
        match &self.kind {
            OpKind::Identity { dim } => *dim,
            OpKind::Dense { d, .. } => *d,
            OpKind::Radon(r) => r.geom.n * r.geom.n,
            OpKind::Conv2d { n, .. } => n * n,
        }
    }

    pub fn out_dim(&self) -> usize {
        match &self.kind {
            OpKind::Identity { dim } => *dim,
            OpKind::Dense { m, .. } => *m,
            OpKind::Radon(r) => r.rays.len(),
            OpKind::Conv2d { n, .. } => n * n,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match &self.kind {
            OpKind::Identity { .. } => "identity",
            OpKind::Dense { .. } => "dense",
            OpKind::Radon(_) => "radon",
            OpKind::Conv2d { .. } => "convolution",
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim(), "apply: input length");
        match &self.kind {
            OpKind::Identity { .. } => x.to_vec(),
            OpKind::Dense { m, d, a } => {
                let mut y = vec![0.0; *m];
                for i in 0..*m {
                    y[i] = la::dot(&a[i * d..(i + 1) * d], x);
                }
                y
            }
            OpKind::Radon(r) => {
                let mut y = vec![0.0; r.rays.len()];
                for (yi, ray) in y.iter_mut().zip(&r.rays) {
                    let mut s = 0.0;
                    for &idx in ray {
                        s += x[idx as usize];
                    }
                    *yi = s * RAY_STEP;
                }
                y
            }
            OpKind::Conv2d { n, k, kernel } => conv2d_zero(x, *n, kernel, *k, false),
        }
    }

    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.out_dim(), "adjoint: input length");
        match &self.kind {
            OpKind::Identity { .. } => y.to_vec(),
            OpKind::Dense { m, d, a } => {
                let mut x = vec![0.0; *d];
                for i in 0..*m {
                    la::axpy(y[i], &a[i * d..(i + 1) * d], &mut x);
                }
                x
            }
            OpKind::Radon(r) => {
                let mut x = vec![0.0; r.geom.n * r.geom.n];
                for (yi, ray) in y.iter().zip(&r.rays) {
                    let v = yi * RAY_STEP;
                    for &idx in ray {
                        x[idx as usize] += v;
                    }
                }
                x
            }
            OpKind::Conv2d { n, k, kernel } => conv2d_zero(y, *n, kernel, *k, true),
        }
    }

    /// `A^T A x` without materializing the normal matrix.
    pub fn normal_apply(&self, x: &[f64]) -> Vec<f64> {
        self.adjoint(&self.apply(x))
    }
}

fn conv2d_zero(x: &[f64], n: usize, kernel: &[f64], k: usize, flip: bool) -> Vec<f64> {
    let half = (k / 2) as isize;
    let mut out = vec![0.0; n * n];
    for i in 0..n as isize {
        for j in 0..n as isize {
            let mut s = 0.0;
            for ki in -half..=half {
                for kj in -half..=half {
                    let (si, sj) = (i + ki, j + kj);
                    if si < 0 || sj < 0 || si >= n as isize || sj >= n as isize {
                        continue;
                    }
                    let (wi, wj) = if flip { (-ki, -kj) } else { (ki, kj) };
                    let w = kernel[(wi + half) as usize * k + (wj + half) as usize];
                    s += w * x[si as usize * n + sj as usize];
                }
            }
            out[i as usize * n + j as usize] = s;
        }
    }
    out
}

/// Builds the parallel-beam line-integral operator by midpoint ray tracing.
/// Samples are spaced `RAY_STEP` apart along each ray and accumulate the
/// pixel containing them; the adjoint scatters with identical weights, so it
/// is the exact transpose.
pub fn build_radon(geom: &RadonGeometry) -> Result<LinearOp> {
    let n = geom.n;
    let half = n as f64 / 2.0;
    let keep_below = 180.0 - geom.missing_wedge_deg;
    let ray_len = fp::ceil(n as f64 * core::f64::consts::SQRT_2);
    let samples = fp::ceil(ray_len / RAY_STEP) as usize;

    let mut rays: Vec<Vec<u32>> = Vec::new();
    for ai in 0..geom.num_angles {
        let deg = ai as f64 * 180.0 / geom.num_angles as f64;
        if deg >= keep_below {
            continue;
        }
        let th = deg * fp::PI / 180.0;
        let (c, s) = (fp::cos(th), fp::sin(th));
        // offset axis ω = (cos, sin), travel axis ω⊥ = (-sin, cos)
        for ri in 0..geom.rays_per_angle {
            let offset = (ri as f64 - (geom.rays_per_angle as f64 - 1.0) / 2.0) * 1.0;
            let mut hits = Vec::new();
            for si in 0..samples {
                let t = (si as f64 - (samples as f64 - 1.0) / 2.0) * RAY_STEP;
                let px = offset * c - t * s;
                let py = offset * s + t * c;
                let col = fp::floor(px + half);
                let row = fp::floor(half - py);
                if col < 0.0 || row < 0.0 || col >= n as f64 || row >= n as f64 {
                    continue;
                }
                hits.push(row as u32 * n as u32 + col as u32);
            }
            rays.push(hits);
        }
    }

    if rays.is_empty() {
        return Err(CoreError::contract(
            "build_radon",
            "geometry produced zero rays".into(),
        ));
    }
    Ok(LinearOp {
        kind: OpKind::Radon(RadonOp {
            geom: geom.clone(),
            kept_angles: rays.len() / geom.rays_per_angle,
            rays,
        }),
    })
}

impl LinearOp {
    /// Number of angles actually kept (after wedge removal); only meaningful
    /// for radon operators.
    pub fn radon_kept_angles(&self) -> Option<usize> {
        match &self.kind {
            OpKind::Radon(r) => Some(r.kept_angles),
            _ => None,
        }
    }
}

/// Power-iteration estimate of the spectral norm. Step-size rules should
/// multiply the square by the 1.01 safeguard (see `safe_norm_sq`).
pub fn op_norm(a: &LinearOp, iters: usize) -> Result<f64> {
    if iters < 1 {
        return Err(CoreError::contract("op_norm", "iters must be >= 1".into()));
    }
    let mut rng = Rng::new(0x5eed_0b57);
    let mut v = rng.normal_vec(a.in_dim());
    let nv = la::norm2(&v);
    if nv == 0.0 {
        return Ok(0.0);
    }
    la::scale(1.0 / nv, &mut v);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let w = a.normal_apply(&v);
        let nw = la::norm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        sigma = fp::sqrt(la::dot(&v, &w)); // Rayleigh quotient of A^T A
        v = w;
        la::scale(1.0 / nw, &mut v);
    }
    Ok(sigma)
}

/// `1.01 * ||A||^2` — the safeguarded constant used by every step-size rule.
pub fn safe_norm_sq(norm_estimate: f64) -> f64 {
    1.01 * norm_estimate * norm_estimate
}

/// A measured right-hand side `y = Ax + η`.
#[derive(Debug, Clone)]
pub struct Measurement<'a> {
    pub y: Vec<f64>,
    pub noise_std: f64,
    pub op: &'a LinearOp,
}

/// Simulates `y = Ax + σ g` with `g` standard normal from the given seed.
pub fn simulate<'a>(a: &'a LinearOp, x: &[f64], sigma: f64, seed: u64) -> Result<Measurement<'a>> {
    if sigma < 0.0 {
        return Err(CoreError::contract(
            "simulate",
            format!("noise std must be non-negative, got {sigma}"),
        ));
    }
    if x.len() != a.in_dim() {
        return Err(CoreError::shape(
            "simulate",
            format!("x has length {}, operator expects {}", x.len(), a.in_dim()),
        ));
    }
    let mut y = a.apply(x);
    if sigma > 0.0 {
        let mut rng = Rng::new(seed);
        for yi in y.iter_mut() {
            *yi += sigma * rng.normal();
        }
    }
    Ok(Measurement {
        y,
        noise_std: sigma,
        op: a,
    })
}

/// Result of the ridge-regularized least-squares reconstruction.
#[derive(Debug, Clone)]
pub struct PinvSolve {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iters: usize,
    pub rel_residual: f64,
}

/// Solves `(A^T A + ridge I) x = A^T y` by conjugate gradients to relative
/// residual 1e-8. This is the fast, artifact-prone reconstruction that both
/// defines the "noisy" training distribution and initializes the solvers.
/// On hitting `max_iters` the best iterate is returned with `converged =
/// false`.
pub fn pseudo_inverse_init(a: &LinearOp, y: &[f64], ridge: f64, max_iters: usize) -> Result<PinvSolve> {
    if ridge <= 0.0 {
        return Err(CoreError::contract(
            "pseudo_inverse_init",
            format!("ridge must be positive, got {ridge}"),
        ));
    }
    if y.len() != a.out_dim() {
        return Err(CoreError::shape(
            "pseudo_inverse_init",
            format!("y has length {}, operator emits {}", y.len(), a.out_dim()),
        ));
    }
    let d = a.in_dim();
    let b = a.adjoint(y);
    let bnorm = la::norm2(&b);
    if bnorm == 0.0 {
        return Ok(PinvSolve {
            x: vec![0.0; d],
            converged: true,
            iters: 0,
            rel_residual: 0.0,
        });
    }
    let tol = 1e-8;
    let apply_m = |v: &[f64]| -> Vec<f64> {
        let mut w = a.normal_apply(v);
        la::axpy(ridge, v, &mut w);
        w
    };

    let mut x = vec![0.0; d];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = la::dot(&r, &r);
    let mut iters = 0;
    for k in 0..max_iters {
        iters = k + 1;
        let mp = apply_m(&p);
        let alpha = rs / la::dot(&p, &mp);
        la::axpy(alpha, &p, &mut x);
        la::axpy(-alpha, &mp, &mut r);
        let rs_new = la::dot(&r, &r);
        if fp::sqrt(rs_new) <= tol * bnorm {
            return Ok(PinvSolve {
                x,
                converged: true,
                iters,
                rel_residual: fp::sqrt(rs_new) / bnorm,
            });
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(PinvSolve {
        x,
        converged: false,
        iters,
        rel_residual: fp::sqrt(rs) / bnorm,
    })
}

/// Max relative adjoint-identity error over random pairs:
/// `|<Ax, y> - <x, A^T y>| / max(|<Ax, y>|, tiny)`.
pub fn adjoint_check(a: &LinearOp, pairs: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x = rng.normal_vec(a.in_dim());
        let y = rng.normal_vec(a.out_dim());
        let lhs = la::dot(&a.apply(&x), &y);
        let rhs = la::dot(&x, &a.adjoint(&y));
        let denom = fp::abs(lhs).max(1e-12);
        worst = worst.max(fp::abs(lhs - rhs) / denom);
    }
    worst
}
