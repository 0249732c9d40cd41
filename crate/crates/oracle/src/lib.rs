//! Independent brute-force references used only from test code.
//!
//! Nothing here shares numerical kernels with the main crate: the SVD, the
//! quadrature, the RNG (PCG32 here vs. xoshiro in the main crate), the metric
//! implementations and the ISTA recursion are all written from their textbook
//! definitions, slowly and directly, so they can serve as oracles.

/// Exhaustive grid search, d ≤ 2.
pub mod grid {
    /// Box bounds and per-dimension resolution.
    #[derive(Debug, Clone)]
    pub struct GridSpec {
        pub lo: Vec<f64>,
        pub hi: Vec<f64>,
        pub res: Vec<usize>,
    }

    impl GridSpec {
        pub fn square(lo: f64, hi: f64, res: usize) -> Self {
            GridSpec {
                lo: vec![lo, lo],
                hi: vec![hi, hi],
                res: vec![res, res],
            }
        }
    }

    /// Evaluates `f` on every node and returns the best one.
    pub fn grid_min<F: FnMut(&[f64]) -> f64>(mut f: F, spec: &GridSpec) -> (Vec<f64>, f64) {
        assert!(spec.lo.len() <= 2, "exhaustive search only supports d <= 2");
        assert!(spec.res.iter().all(|r| *r >= 3));
        let d = spec.lo.len();
        let mut best_x = spec.lo.clone();
        let mut best_f = f64::INFINITY;
        if d == 1 {
            let n = spec.res[0];
            for i in 0..n {
                let x = spec.lo[0] + (spec.hi[0] - spec.lo[0]) * i as f64 / (n - 1) as f64;
                let v = f(&[x]);
                if v < best_f {
                    best_f = v;
                    best_x = vec![x];
                }
            }
        } else {
            let (nx, ny) = (spec.res[0], spec.res[1]);
            for i in 0..nx {
                let x = spec.lo[0] + (spec.hi[0] - spec.lo[0]) * i as f64 / (nx - 1) as f64;
                for j in 0..ny {
                    let y = spec.lo[1] + (spec.hi[1] - spec.lo[1]) * j as f64 / (ny - 1) as f64;
                    let v = f(&[x, y]);
                    if v < best_f {
                        best_f = v;
                        best_x = vec![x, y];
                    }
                }
            }
        }
        (best_x, best_f)
    }
}

/// Closed-form proximal map of the l1 norm, and the ISTA recursion built on it.
pub mod prox {
    pub fn soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
        assert!(tau >= 0.0);
        v.iter()
            .map(|&x| {
                if x > tau {
                    x - tau
                } else if x < -tau {
                    x + tau
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Plain ISTA on `0.5||Ax - y||^2 + lam * ||x||_1` with step `alpha`,
    /// recording every iterate. `a` is row-major `m x d`.
    pub fn ista_iterates(
        a: &[f64],
        m: usize,
        d: usize,
        y: &[f64],
        lam: f64,
        alpha: f64,
        x0: &[f64],
        iters: usize,
    ) -> Vec<Vec<f64>> {
        let mut x = x0.to_vec();
        let mut out = vec![x.clone()];
        for _ in 0..iters {
            // residual r = Ax - y
            let mut r = vec![0.0; m];
            for i in 0..m {
                let mut s = 0.0;
                for j in 0..d {
                    s += a[i * d + j] * x[j];
                }
                r[i] = s - y[i];
            }
            // g = A^T r
            let mut g = vec![0.0; d];
            for i in 0..m {
                for j in 0..d {
                    g[j] += a[i * d + j] * r[i];
                }
            }
            let v: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
            x = soft_threshold(&v, alpha * lam);
            out.push(x.clone());
        }
        out
    }
}

/// One-sided Jacobi SVD for small dense matrices.
pub mod svd {
    /// Returns the singular values of a row-major `m x n` matrix, descending.
    /// Also returns `u` (m x r) and `v` (n x r) with r = min(m, n) so that
    /// `a ≈ u * diag(s) * v^T`.
    pub struct Svd {
        pub u: Vec<f64>,
        pub s: Vec<f64>,
        pub v: Vec<f64>,
        pub m: usize,
        pub n: usize,
        pub r: usize,
    }

    pub fn jacobi_svd(a: &[f64], m: usize, n: usize) -> Svd {
        // Work on columns of a copy; one-sided Jacobi orthogonalizes columns.
        // If m < n, decompose the transpose and swap the factors.
        if m < n {
            let mut at = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    at[j * m + i] = a[i * n + j];
                }
            }
            let s = jacobi_svd(&at, n, m);
            return Svd {
                u: s.v,
                s: s.s,
                v: s.u,
                m,
                n,
                r: s.r,
            };
        }

        let r = n;
        let mut u = a.to_vec(); // m x n, columns will become u_i * s_i
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }

        let col_dot = |w: &[f64], p: usize, q: usize| -> f64 {
            let mut s = 0.0;
            for i in 0..m {
                s += w[i * n + p] * w[i * n + q];
            }
            s
        };

        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    let app = col_dot(&u, p, p);
                    let aqq = col_dot(&u, q, q);
                    let apq = col_dot(&u, p, q);
                    off = off.max(apq.abs() / (app * aqq).sqrt().max(1e-300));
                    if apq.abs() <= 1e-15 * (app * aqq).sqrt() {
                        continue;
                    }
                    let zeta = (aqq - app) / (2.0 * apq);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let up = u[i * n + p];
                        let uq = u[i * n + q];
                        u[i * n + p] = c * up - s * uq;
                        u[i * n + q] = s * up + c * uq;
                    }
                    for i in 0..n {
                        let vp = v[i * n + p];
                        let vq = v[i * n + q];
                        v[i * n + p] = c * vp - s * vq;
                        v[i * n + q] = s * vp + c * vq;
                    }
                }
            }
            if off < 1e-14 {
                break;
            }
        }

        let mut sv: Vec<f64> = (0..n).map(|j| col_dot(&u, j, j).sqrt()).collect();
        // Normalize u columns.
        for j in 0..n {
            if sv[j] > 0.0 {
                for i in 0..m {
                    u[i * n + j] /= sv[j];
                }
            }
        }
        // Sort descending.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
        let mut us = vec![0.0; m * n];
        let mut vs = vec![0.0; n * n];
        let mut ss = vec![0.0; n];
        for (newj, &oldj) in order.iter().enumerate() {
            ss[newj] = sv[oldj];
            for i in 0..m {
                us[i * n + newj] = u[i * n + oldj];
            }
            for i in 0..n {
                vs[i * n + newj] = v[i * n + oldj];
            }
        }
        sv = ss;
        Svd {
            u: us,
            s: sv,
            v: vs,
            m,
            n,
            r,
        }
    }

    /// Pseudoinverse solve `x = V S^+ U^T y` with cutoff `tol * s_max`.
    pub fn pinv_apply(svd: &Svd, y: &[f64], tol: f64) -> Vec<f64> {
        let (m, n) = (svd.m, svd.n);
        let r = svd.r;
        let smax = svd.s.first().copied().unwrap_or(0.0);
        // If m < n the stored factors are swapped relative to the m >= n case;
        // handle both through the generic contraction x = sum_k v_k (u_k.y)/s_k.
        let mut x = vec![0.0; n];
        for k in 0..r {
            let sk = svd.s[k];
            if sk <= tol * smax || sk == 0.0 {
                continue;
            }
            let mut uy = 0.0;
            for i in 0..m {
                uy += svd.u[i * r + k] * y[i];
            }
            for j in 0..n {
                x[j] += svd.v[j * r + k] * uy / sk;
            }
        }
        x
    }
}

/// Fixed-subdivision Simpson quadrature.
pub mod quad {
    /// Composite Simpson with `2k` panels (n is rounded up to even).
    pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 0 { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        s * h / 3.0
    }
}

/// Monte-Carlo expectation with a PCG32 stream (independent of the main
/// crate's generator).
pub mod mc {
    pub struct Pcg32 {
        state: u64,
        inc: u64,
    }

    impl Pcg32 {
        pub fn new(seed: u64) -> Self {
            let mut r = Pcg32 {
                state: 0,
                inc: (seed << 1) | 1,
            };
            r.next_u32();
            r.state = r.state.wrapping_add(0x853c_49e6_748f_ea9b ^ seed);
            r.next_u32();
            r
        }

        pub fn next_u32(&mut self) -> u32 {
            let old = self.state;
            self.state = old
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(self.inc);
            let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
            let rot = (old >> 59) as u32;
            xorshifted.rotate_right(rot)
        }

        pub fn uniform(&mut self) -> f64 {
            (self.next_u32() as f64 + 0.5) / 4_294_967_296.0
        }

        pub fn normal(&mut self) -> f64 {
            // Box-Muller, cosine branch only (keeps the stream simple).
            let u1 = self.uniform();
            let u2 = self.uniform();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }

    /// Sample mean and standard error of `g` under `sample`.
    pub fn mc_expectation<S, G>(
        mut sample: S,
        mut g: G,
        n: usize,
        seed: u64,
    ) -> (f64, f64)
    where
        S: FnMut(&mut Pcg32) -> Vec<f64>,
        G: FnMut(&[f64]) -> f64,
    {
        let mut rng = Pcg32::new(seed);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = sample(&mut rng);
            let v = g(&x);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        (mean, (var / n as f64).sqrt())
    }
}

/// Straightforward image-quality metrics written from their definitions.
pub mod metrics {
    /// PSNR with declared peak; zero MSE reported as the 99 dB cap.
    pub fn psnr_ref(x: &[f64], r: &[f64], peak: f64) -> f64 {
        assert_eq!(x.len(), r.len());
        let mse: f64 = x
            .iter()
            .zip(r)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / x.len() as f64;
        if mse == 0.0 {
            return 99.0;
        }
        (10.0 * (peak * peak / mse).log10()).min(99.0)
    }

    /// Single-scale SSIM, 11x11 Gaussian window sigma = 1.5, k1 = 0.01,
    /// k2 = 0.03, means over the valid (un-padded) window positions. Direct
    /// per-window double loops, no separable filtering.
    pub fn ssim_ref(x: &[f64], r: &[f64], n: usize, peak: f64) -> f64 {
        assert_eq!(x.len(), n * n);
        assert_eq!(r.len(), n * n);
        assert!(n >= 11);
        let half = 5usize;
        let mut w = [[0.0f64; 11]; 11];
        let mut wsum = 0.0;
        for i in 0..11 {
            for j in 0..11 {
                let di = i as f64 - 5.0;
                let dj = j as f64 - 5.0;
                let v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
                w[i][j] = v;
                wsum += v;
            }
        }
        for row in w.iter_mut() {
            for v in row.iter_mut() {
                *v /= wsum;
            }
        }

        let c1 = (0.01 * peak) * (0.01 * peak);
        let c2 = (0.03 * peak) * (0.03 * peak);
        let mut total = 0.0;
        let mut count = 0usize;
        for ci in half..(n - half) {
            for cj in half..(n - half) {
                let mut mx = 0.0;
                let mut mr = 0.0;
                for i in 0..11 {
                    for j in 0..11 {
                        let px = x[(ci + i - half) * n + (cj + j - half)];
                        let pr = r[(ci + i - half) * n + (cj + j - half)];
                        mx += w[i][j] * px;
                        mr += w[i][j] * pr;
                    }
                }
                let mut vx = 0.0;
                let mut vr = 0.0;
                let mut cov = 0.0;
                for i in 0..11 {
                    for j in 0..11 {
                        let px = x[(ci + i - half) * n + (cj + j - half)];
                        let pr = r[(ci + i - half) * n + (cj + j - half)];
                        vx += w[i][j] * (px - mx) * (px - mx);
                        vr += w[i][j] * (pr - mr) * (pr - mr);
                        cov += w[i][j] * (px - mx) * (pr - mr);
                    }
                }
                let s = ((2.0 * mx * mr + c1) * (2.0 * cov + c2))
                    / ((mx * mx + mr * mr + c1) * (vx + vr + c2));
                total += s;
                count += 1;
            }
        }
        total / count as f64
    }
}
