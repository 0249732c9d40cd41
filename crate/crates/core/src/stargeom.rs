//! Planar star bodies, radial densities and the gauge view of optimal
//! regularizers: radial summary statistics, the closed-form optimal body,
//! harmonic radial combinations, DC decomposition witnesses and dual mixed
//! volumes. Everything runs in dimension `d = 2`, where all the integrals
//! reduce to one-dimensional quadrature over angle or radius.
//!
//! A [`StarBody`] stores radial samples on a uniform angular grid. Between
//! nodes the boundary is interpolated by the chord between neighboring
//! boundary points, i.e. the represented set is the inscribed polygon. For a
//! convex body sampled on its boundary the polygon is convex, so its gauge
//! is *exactly* convex and the Jensen-triple certification below can run at
//! tight tolerance instead of absorbing angular-interpolation error.

use crate::error::CoreError;
use crate::fp;
use crate::icnn::{jensen_convexity_check, JensenReport};
use crate::rng::Rng;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Ambient dimension of this module.
pub const D: usize = 2;

// ---------------------------------------------------------------------------
// Star bodies

#[derive(Debug, Clone, PartialEq)]
pub struct StarBody {
    radii: Vec<f64>,
}

impl StarBody {
    /// Radial samples at angles `2π j / m`; all must be strictly positive
    /// and finite.
    pub fn from_samples(radii: Vec<f64>) -> Result<Self> {
        if radii.len() < 3 {
            return Err(CoreError::contract(
                "star_body",
                format!("need at least 3 angular samples, got {}", radii.len()),
            ));
        }
        for (j, r) in radii.iter().enumerate() {
            if !(r.is_finite() && *r > 0.0) {
                return Err(CoreError::hypothesis(
                    "star_body",
                    format!("radial sample {r} at node {j} is not strictly positive"),
                ));
            }
        }
        Ok(StarBody { radii })
    }

    pub fn from_radial_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let radii = (0..m).map(|j| f(fp::TAU * j as f64 / m as f64)).collect();
        StarBody::from_samples(radii)
    }

    pub fn disc(m: usize, r: f64) -> Result<Self> {
        StarBody::from_samples(vec![r; m.max(3)])
    }

    /// `{x : ||x||_p <= scale}`; `p < 1` gives the nonconvex quasinorm ball.
    pub fn lp_ball(m: usize, p: f64, scale: f64) -> Result<Self> {
        StarBody::from_radial_fn(m, |th| {
            let c = fp::abs(fp::cos(th));
            let s = fp::abs(fp::sin(th));
            scale / fp::powf(fp::powf(c, p) + fp::powf(s, p), 1.0 / p)
        })
    }

    pub fn linf_ball(m: usize, scale: f64) -> Result<Self> {
        StarBody::from_radial_fn(m, |th| {
            scale / fp::abs(fp::cos(th)).max(fp::abs(fp::sin(th)))
        })
    }

    pub fn l1_ball(m: usize, scale: f64) -> Result<Self> {
        StarBody::from_radial_fn(m, |th| scale / (fp::abs(fp::cos(th)) + fp::abs(fp::sin(th))))
    }

    pub fn m(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angle(&self, j: usize) -> f64 {
        fp::TAU * j as f64 / self.m() as f64
    }

    pub fn node_dir(&self, j: usize) -> [f64; 2] {
        let th = self.angle(j);
        [fp::cos(th), fp::sin(th)]
    }

    /// Radial function at angle `theta`. Node angles return the stored
    /// sample bitwise (so the gauge is its exact reciprocal there); between
    /// nodes the ray is intersected with the boundary chord.
    pub fn radial(&self, theta: f64) -> f64 {
        let m = self.m();
        let dtheta = fp::TAU / m as f64;
        let mut t = theta % fp::TAU;
        if t < 0.0 {
            t += fp::TAU;
        }
        let u = t / dtheta;
        let j = (fp::floor(u) as usize).min(m - 1);
        let frac = u - j as f64;
        if frac < 1e-9 {
            return self.radii[j];
        }
        if frac > 1.0 - 1e-9 {
            return self.radii[(j + 1) % m];
        }
        let jn = (j + 1) % m;
        let a0 = self.angle(j);
        let a1 = a0 + dtheta;
        let p0 = [self.radii[j] * fp::cos(a0), self.radii[j] * fp::sin(a0)];
        let p1 = [self.radii[jn] * fp::cos(a1), self.radii[jn] * fp::sin(a1)];
        let dir = [fp::cos(t), fp::sin(t)];
        let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
        let num = cross(p0, p1);
        let den = cross(dir, [p1[0] - p0[0], p1[1] - p0[1]]);
        num / den
    }

    /// Gauge of the unit direction at angle `theta`: `1 / radial(theta)`.
    pub fn gauge_dir(&self, theta: f64) -> f64 {
        1.0 / self.radial(theta)
    }

    /// `||x||_K = ||x||₂ / ρ_K(x/||x||₂)`, with `gauge(0) = 0`.
    pub fn gauge(&self, x: &[f64; 2]) -> f64 {
        let r = fp::hypot(x[0], x[1]);
        if r == 0.0 {
            return 0.0;
        }
        let th = fp::atan2(x[1], x[0]);
        r / self.radial(th)
    }

    /// `(1/d) ∫ ρ^d du` over the angular grid (the same quadrature the dual
    /// mixed volumes use).
    pub fn volume(&self) -> f64 {
        let m = self.m() as f64;
        let dtheta = fp::TAU / m;
        0.5 * dtheta * self.radii.iter().map(|r| r * r).sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Result<StarBody> {
        StarBody::from_samples(self.radii.iter().map(|r| c * r).collect())
    }

    /// Dilate with unit volume.
    pub fn unit_volume(&self) -> Result<StarBody> {
        let v = self.volume();
        self.scaled(fp::powf(v, -1.0 / D as f64))
    }
}

/// Gauge values on a square grid (row-major, `res x res`), for contour
/// export.
pub fn gauge_field(body: &StarBody, lo: f64, hi: f64, res: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(res * res);
    for i in 0..res {
        // top row first, like image coordinates
        let y = hi - (hi - lo) * i as f64 / (res - 1) as f64;
        for j in 0..res {
            let x = lo + (hi - lo) * j as f64 / (res - 1) as f64;
            out.push(body.gauge(&[x, y]));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Radial densities

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    inv: [[f64; 2]; 2],
    norm: f64,
    chol: [[f64; 2]; 2],
}

impl Gaussian2 {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if cov[0][1] != cov[1][0] || det <= 0.0 || cov[0][0] <= 0.0 {
            return Err(CoreError::contract(
                "gaussian",
                format!("covariance must be symmetric positive definite, det {det}"),
            ));
        }
        let inv = [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ];
        let l11 = fp::sqrt(cov[0][0]);
        let l21 = cov[1][0] / l11;
        let l22 = fp::sqrt(cov[1][1] - l21 * l21);
        Ok(Gaussian2 {
            mean,
            cov,
            inv,
            norm: 1.0 / (fp::TAU * fp::sqrt(det)),
            chol: [[l11, 0.0], [l21, l22]],
        })
    }

    pub fn isotropic(std: f64) -> Result<Self> {
        Gaussian2::new([0.0, 0.0], [[std * std, 0.0], [0.0, std * std]])
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        let q = self.inv[0][0] * dx * dx + 2.0 * self.inv[0][1] * dx * dy + self.inv[1][1] * dy * dy;
        self.norm * fp::exp(-0.5 * q)
    }

    pub fn sample(&self, rng: &mut Rng) -> [f64; 2] {
        let z0 = rng.normal();
        let z1 = rng.normal();
        [
            self.mean[0] + self.chol[0][0] * z0,
            self.mean[1] + self.chol[1][0] * z0 + self.chol[1][1] * z1,
        ]
    }
}

/// A planar density we can evaluate along rays (and, except for `Custom`),
/// sample from.
#[derive(Clone)]
pub enum RadialDensity {
    Gaussian(Gaussian2),
    /// Non-negative weights summing to one.
    Mixture(Vec<(f64, Gaussian2)>),
    Custom(fn(f64, f64) -> f64),
}

impl RadialDensity {
    pub fn gaussian(g: Gaussian2) -> Self {
        RadialDensity::Gaussian(g)
    }

    pub fn mixture(parts: Vec<(f64, Gaussian2)>) -> Result<Self> {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.is_empty() || parts.iter().any(|(w, _)| *w < 0.0) || fp::abs(total - 1.0) > 1e-9 {
            return Err(CoreError::contract(
                "mixture",
                format!("weights must be non-negative and sum to 1, got {total}"),
            ));
        }
        Ok(RadialDensity::Mixture(parts))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            RadialDensity::Gaussian(g) => g.eval(x, y),
            RadialDensity::Mixture(parts) => {
                parts.iter().map(|(w, g)| w * g.eval(x, y)).sum()
            }
            RadialDensity::Custom(f) => f(x, y),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<[f64; 2]> {
        match self {
            RadialDensity::Gaussian(g) => Ok(g.sample(rng)),
            RadialDensity::Mixture(parts) => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (w, g) in parts {
                    acc += w;
                    if u <= acc {
                        return Ok(g.sample(rng));
                    }
                }
                Ok(parts.last().expect("nonempty").1.sample(rng))
            }
            RadialDensity::Custom(_) => Err(CoreError::contract(
                "radial_density",
                "custom densities cannot be sampled".into(),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Radial quadrature

#[derive(Debug, Clone, Copy)]
pub struct QuadCfg {
    /// Relative tolerance of the adaptive pass.
    pub rel_tol: f64,
    /// Stop extending the domain once the next chunk is below this fraction
    /// of the accumulated integral.
    pub tail_rel: f64,
    pub max_doublings: usize,
}

impl Default for QuadCfg {
    fn default() -> Self {
        QuadCfg {
            rel_tol: 1e-9,
            tail_rel: 1e-12,
            max_doublings: 60,
        }
    }
}

fn simpson_fixed(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

fn adaptive_simpson_rec(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || fp::abs(delta) <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

fn adaptive_simpson(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, eps_abs: f64) -> f64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, eps_abs, 40)
}

/// `∫₀^∞ t^pow · p(t·u) dt` for `pow > -1`.
///
/// The substitution `t = s^k` with `k > 1/(pow + 1)` removes the endpoint
/// singularity; the upper limit grows by doubling until the next chunk is
/// negligible. A tail that keeps growing is reported as divergence.
pub fn radial_moment(p: &RadialDensity, pow: f64, u: [f64; 2], quad: &QuadCfg) -> Result<f64> {
    if pow <= -1.0 {
        return Err(CoreError::contract(
            "radial_moment",
            format!("exponent {pow} leaves the integral divergent at zero"),
        ));
    }
    // substitution order: smallest k with k(pow+1) - 1 >= 0.5
    let k = if pow >= 0.5 {
        1.0
    } else {
        fp::ceil(1.5 / (pow + 1.0))
    };
    let mut g = |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let t = if k == 1.0 { s } else { fp::powf(s, k) };
        k * fp::powf(s, k * (pow + 1.0) - 1.0) * p.eval(t * u[0], t * u[1])
    };

    // Find the domain: double T until the next chunk is negligible. A tail
    // chunk that grows many times in a row signals divergence.
    let mut t_upper = 1.0f64; // in s-space
    let mut acc = simpson_fixed(&mut g, 0.0, t_upper, 64);
    let mut prev_chunk = f64::INFINITY;
    let mut growth_streak = 0usize;
    for _ in 0..quad.max_doublings {
        let chunk = simpson_fixed(&mut g, t_upper, 2.0 * t_upper, 64);
        if fp::abs(chunk) <= quad.tail_rel * fp::abs(acc).max(1e-300) {
            break;
        }
        if chunk > prev_chunk {
            growth_streak += 1;
            if growth_streak >= 10 {
                return Err(CoreError::hypothesis(
                    "radial_moment",
                    "tail keeps growing; integral looks divergent".into(),
                ));
            }
        } else {
            growth_streak = 0;
        }
        acc += chunk;
        prev_chunk = chunk;
        t_upper *= 2.0;
    }

    // Refine with the adaptive pass at the found domain.
    let eps = (fp::abs(acc) * quad.rel_tol).max(1e-300);
    Ok(adaptive_simpson(&mut g, 0.0, t_upper, eps))
}

/// Radial summary of a density at power `alpha`:
/// `(∫₀^∞ t^{d+1-α} p(tu) dt)^{1/(d+α)}` with `d = 2`.
pub fn rho_p_alpha(p: &RadialDensity, alpha: f64, u: [f64; 2], quad: &QuadCfg) -> Result<f64> {
    if alpha <= 0.0 || alpha >= (D + 2) as f64 {
        return Err(CoreError::contract(
            "rho_p_alpha",
            format!("alpha must lie in (0, {}), got {alpha}", D + 2),
        ));
    }
    let pow = (D + 1) as f64 - alpha;
    let integral = radial_moment(p, pow, u, quad)?;
    Ok(fp::powf(integral, 1.0 / (D as f64 + alpha)))
}

// ---------------------------------------------------------------------------
// Optimal star body

/// Builds the body whose radial samples are
/// `(ρ_{p_r,α}^{d+α} - ρ_{p_n,α}^{d+α})^{1/(d+α)}` per grid direction,
/// requiring `ρ_{p_r,α} > ρ_{p_n,α}` everywhere (the offending direction is
/// named otherwise). With `unit_volume` the result is rescaled to volume 1.
pub fn optimal_star_body(
    p_r: &RadialDensity,
    p_n: Option<&RadialDensity>,
    alpha: f64,
    m: usize,
    quad: &QuadCfg,
    unit_volume: bool,
) -> Result<StarBody> {
    let da = D as f64 + alpha;
    let mut radii = Vec::with_capacity(m);
    for j in 0..m {
        let th = fp::TAU * j as f64 / m as f64;
        let u = [fp::cos(th), fp::sin(th)];
        let rr = rho_p_alpha(p_r, alpha, u, quad)?;
        let rn = match p_n {
            Some(pn) => rho_p_alpha(pn, alpha, u, quad)?,
            None => 0.0,
        };
        if rr <= rn {
            return Err(CoreError::hypothesis(
                "optimal_star_body",
                format!(
                    "clean radial summary must dominate the noisy one; at angle {th:.6} rad: {rr} <= {rn}"
                ),
            ));
        }
        radii.push(fp::powf(
            fp::powf(rr, da) - fp::powf(rn, da),
            1.0 / da,
        ));
    }
    let body = StarBody::from_samples(radii)?;
    if unit_volume {
        body.unit_volume()
    } else {
        Ok(body)
    }
}

// ---------------------------------------------------------------------------
// Harmonic combination and the DC witness

/// α-harmonic radial combination: `ρ_M^{-α} = ρ_K^{-α} + ρ_C^{-α}` per node.
/// Equivalently the gauges satisfy `gauge_M^α = gauge_K^α + gauge_C^α`.
pub fn harmonic_combination(k: &StarBody, c: &StarBody, alpha: f64) -> Result<StarBody> {
    if k.m() != c.m() {
        return Err(CoreError::shape(
            "harmonic_combination",
            format!("grids differ: {} vs {}", k.m(), c.m()),
        ));
    }
    if alpha <= 0.0 {
        return Err(CoreError::contract(
            "harmonic_combination",
            format!("alpha must be positive, got {alpha}"),
        ));
    }
    let radii = k
        .radii()
        .iter()
        .zip(c.radii())
        .map(|(rk, rc)| {
            fp::powf(fp::powf(*rk, -alpha) + fp::powf(*rc, -alpha), -1.0 / alpha)
        })
        .collect();
    StarBody::from_samples(radii)
}

#[derive(Debug, Clone)]
pub struct DcWitnessReport {
    pub m_convex: JensenReport,
    pub c_convex: JensenReport,
    /// Max relative error of `gauge_K^α - (gauge_M^α - gauge_C^α)` over
    /// sampled node directions.
    pub identity_max_rel_err: f64,
    pub identity_samples: usize,
}

impl DcWitnessReport {
    pub fn identity_holds(&self, tol: f64) -> bool {
        self.identity_max_rel_err <= tol
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.m_convex.passed() && self.c_convex.passed() && self.identity_holds(tol)
    }
}

/// Builds `M = harmonic_combination(K, C)` and checks (a) convexity of
/// `gauge_M^α` and `gauge_C^α` by random Jensen triples at tolerance 1e-9,
/// (b) the decomposition identity `gauge_K^α = gauge_M^α - gauge_C^α` on
/// node directions with random radii (where the sampled representation is
/// exact).
pub fn dc_witness_check(
    k: &StarBody,
    c: &StarBody,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<DcWitnessReport> {
    if alpha < 1.0 {
        return Err(CoreError::contract(
            "dc_witness_check",
            format!("alpha must be >= 1 for gauge powers to stay convex, got {alpha}"),
        ));
    }
    let m_body = harmonic_combination(k, c, alpha)?;

    let span = |b: &StarBody| b.radii().iter().fold(0.0f64, |a, r| a.max(*r));
    let box_r = 2.0 * span(k).max(span(c)).max(1.0);
    let lo = [-box_r, -box_r];
    let hi = [box_r, box_r];

    let m_convex = jensen_convexity_check(
        |x: &[f64]| Ok(fp::powf(m_body.gauge(&[x[0], x[1]]), alpha)),
        &lo,
        &hi,
        samples,
        1e-9,
        seed,
    )?;
    let c_convex = jensen_convexity_check(
        |x: &[f64]| Ok(fp::powf(c.gauge(&[x[0], x[1]]), alpha)),
        &lo,
        &hi,
        samples,
        1e-9,
        seed ^ 0xabcd,
    )?;

    let mut rng = Rng::new(seed ^ 0x5eed);
    let mut worst = 0.0f64;
    let ns = samples.max(1);
    for _ in 0..ns {
        let j = rng.below(k.m());
        let r = rng.range(0.1, box_r);
        let th = k.angle(j);
        let x = [r * fp::cos(th), r * fp::sin(th)];
        let gk = fp::powf(k.gauge(&x), alpha);
        let gm = fp::powf(m_body.gauge(&x), alpha);
        let gc = fp::powf(c.gauge(&x), alpha);
        let err = fp::abs(gk - (gm - gc)) / 1.0f64.max(fp::abs(gk));
        worst = worst.max(err);
    }

    Ok(DcWitnessReport {
        m_convex,
        c_convex,
        identity_max_rel_err: worst,
        identity_samples: ns,
    })
}

// ---------------------------------------------------------------------------
// Dual mixed volumes

/// `Ṽ_i(C, K) = (1/d) ∫ ρ_C^{d-i} ρ_K^i du` by the periodic trapezoid rule
/// (spectrally accurate for smooth radial functions).
pub fn dual_mixed_volume(c: &StarBody, k: &StarBody, i: f64) -> Result<f64> {
    if c.m() != k.m() {
        return Err(CoreError::shape(
            "dual_mixed_volume",
            format!("grids differ: {} vs {}", c.m(), k.m()),
        ));
    }
    let m = c.m() as f64;
    let dtheta = fp::TAU / m;
    let d = D as f64;
    let mut s = 0.0;
    for (rc, rk) in c.radii().iter().zip(k.radii()) {
        s += fp::powf(*rc, d - i) * fp::powf(*rk, i);
    }
    Ok(s * dtheta / d)
}

/// The dual-mixed-volume lower bound with `(i, j, k) = (-α, 0, d)`:
/// `Ṽ_{-α}(C, K) >= vol(C)^{(d+α)/d} vol(K)^{-α/d}`, tight exactly on
/// dilate pairs.
#[derive(Debug, Clone, Copy)]
pub struct MixedVolumeBound {
    pub lhs: f64,
    pub rhs: f64,
    /// Relative slack `(lhs - rhs)/rhs`; ~0 identifies dilates.
    pub rel_slack: f64,
}

pub fn mixed_volume_bound(c: &StarBody, k: &StarBody, alpha: f64) -> Result<MixedVolumeBound> {
    let lhs = dual_mixed_volume(c, k, -alpha)?;
    let d = D as f64;
    let rhs = fp::powf(c.volume(), (d + alpha) / d) * fp::powf(k.volume(), -alpha / d);
    Ok(MixedVolumeBound {
        lhs,
        rhs,
        rel_slack: (lhs - rhs) / rhs,
    })
}

// ---------------------------------------------------------------------------
// Objective identity (expectation of a gauge power vs angular quadrature)

#[derive(Debug, Clone, Copy)]
pub struct ObjIdSide {
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub quadrature: f64,
    /// `|mc - quadrature| <= 3 stderr`
    pub within_3se: bool,
}

/// Checks `E_p[ gauge_K(x)^α ] = ∫ w_p(u) ρ_K(u)^{-α} du` with
/// `w_p(u) = ∫₀^∞ r^{d+α-1} p(ru) dr` (spherical coordinates), by Monte
/// Carlo on the left and node quadrature on the right. `alpha = 0`
/// degenerates to the total mass on both sides.
pub fn objective_identity_check(
    p_r: &RadialDensity,
    p_n: Option<&RadialDensity>,
    alpha: f64,
    k: &StarBody,
    mc_samples: usize,
    seed: u64,
    quad: &QuadCfg,
) -> Result<Vec<ObjIdSide>> {
    let mut out = Vec::new();
    let run = |p: &RadialDensity, stream: u64| -> Result<ObjIdSide> {
        // Monte-Carlo side.
        let mut rng = Rng::new(seed ^ stream);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..mc_samples {
            let x = p.sample(&mut rng)?;
            let v = if alpha == 0.0 {
                1.0
            } else {
                fp::powf(k.gauge(&x), alpha)
            };
            sum += v;
            sumsq += v * v;
        }
        let n = mc_samples as f64;
        let mean = sum / n;
        let var = (sumsq / n - mean * mean).max(0.0);
        let se = fp::sqrt(var / n);

        // Quadrature side.
        let m = k.m();
        let dtheta = fp::TAU / m as f64;
        let mut s = 0.0;
        for j in 0..m {
            let th = k.angle(j);
            let u = [fp::cos(th), fp::sin(th)];
            let w = radial_moment(p, (D as f64) + alpha - 1.0, u, quad)?;
            s += w * fp::powf(k.radii()[j], -alpha);
        }
        let quadrature = s * dtheta;

        Ok(ObjIdSide {
            mc_mean: mean,
            mc_stderr: se,
            quadrature,
            within_3se: fp::abs(mean - quadrature) <= 3.0 * se.max(1e-12),
        })
    };
    out.push(run(p_r, 0x0157_01)?);
    if let Some(pn) = p_n {
        out.push(run(pn, 0x0157_02)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Local minimality of the optimal body

#[derive(Debug, Clone, Copy)]
pub struct PerturbReport {
    pub base_objective: f64,
    pub worst_drop: f64,
    pub trials: usize,
    pub pass: bool,
}

/// First-order optimality probe: the unit-volume dilate of `c` should
/// minimize `J(K) = d·Ṽ_{-α}(C, K)` among unit-volume bodies, so random
/// ±`eps` radial perturbations (volume-renormalized) must not reduce `J`
/// beyond quadrature noise.
pub fn optimal_body_perturbation_check(
    c: &StarBody,
    alpha: f64,
    trials: usize,
    eps: f64,
    seed: u64,
) -> Result<PerturbReport> {
    let base = c.unit_volume()?;
    let j_base = (D as f64) * dual_mixed_volume(c, &base, -alpha)?;
    let mut rng = Rng::new(seed);
    let m = c.m();
    let mut worst_drop = 0.0f64;
    for _ in 0..trials {
        // smooth random bump: low-order trig polynomial, sup-normalized
        let order = 1 + rng.below(5);
        let coeffs: Vec<(f64, f64)> = (0..=order)
            .map(|_| (rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
            .collect();
        let mut bump: Vec<f64> = (0..m)
            .map(|j| {
                let th = fp::TAU * j as f64 / m as f64;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| a * fp::cos(k as f64 * th) + b * fp::sin(k as f64 * th))
                    .sum()
            })
            .collect();
        let sup = bump.iter().fold(0.0f64, |a, v| a.max(fp::abs(*v))).max(1e-12);
        for v in bump.iter_mut() {
            *v /= sup;
        }
        let radii: Vec<f64> = base
            .radii()
            .iter()
            .zip(&bump)
            .map(|(r, b)| r * (1.0 + eps * b))
            .collect();
        let k = StarBody::from_samples(radii)?.unit_volume()?;
        let j_pert = (D as f64) * dual_mixed_volume(c, &k, -alpha)?;
        worst_drop = worst_drop.max(j_base - j_pert);
    }
    let tol = 1e-8 * fp::abs(j_base);
    Ok(PerturbReport {
        base_objective: j_base,
        worst_drop,
        trials,
        pass: worst_drop <= tol,
    })
}
