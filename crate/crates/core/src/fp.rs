//! Scalar math routed through `libm`.
//!
//! Using the pure-Rust implementations (instead of the platform libm behind
//! `std`) keeps every transcendental bit-identical across hosts, which the
//! reproducibility contracts rely on.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn powf(x: f64, p: f64) -> f64 {
    libm::pow(x, p)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + exp(-t))
    } else {
        let e = exp(t);
        e / (1.0 + e)
    }
}

/// Numerically stable `softplus` with sharpness `beta`:
/// `(1/beta) * ln(1 + exp(beta * x))`.
#[inline]
pub fn softplus(x: f64, beta: f64) -> f64 {
    let t = beta * x;
    let m = if x > 0.0 { x } else { 0.0 };
    m + ln_1p(exp(-abs(t))) / beta
}

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = 2.0 * core::f64::consts::PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for i in -40..=40 {
            let x = i as f64 * 0.25;
            let naive = ln(1.0 + exp(2.0 * x)) / 2.0;
            assert!((softplus(x, 2.0) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_stable_for_large_inputs() {
        assert!((softplus(1000.0, 1.0) - 1000.0).abs() < 1e-9);
        assert_eq!(softplus(-1000.0, 1.0), 0.0);
    }

    #[test]
    fn sigmoid_symmetry() {
        for i in -20..=20 {
            let t = i as f64 * 0.5;
            assert!((sigmoid(t) + sigmoid(-t) - 1.0).abs() < 1e-15);
        }
    }
}
