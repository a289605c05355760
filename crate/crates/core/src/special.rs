//! Scalar special functions: standard normal, log-gamma/beta wrappers,
//! the beta quantile and a few log-space helpers.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use statrs::function::{beta, erf};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile. Returns `±inf` at the endpoints.
#[inline]
pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log of the binomial coefficient `n choose k`.
#[inline]
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Regularized incomplete beta `I_x(a, b)`.
#[inline]
pub fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta::beta_reg(a, b, x)
    }
}

#[inline]
pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

/// Quantile of Beta(a, b) at probability `p ∈ (0, 1)`.
///
/// Bracketing search on the regularized incomplete beta: Newton steps from a
/// normal-approximation seed, falling back to bisection whenever a step leaves
/// the current bracket. Upper-half probabilities are solved on the reflected
/// distribution so the search always runs where the quantile has full relative
/// precision.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if p > 0.5 {
        return 1.0 - beta_quantile_lower(1.0 - p, b, a);
    }
    beta_quantile_lower(p, a, b)
}

fn beta_quantile_lower(p: f64, a: f64, b: f64) -> f64 {
    let ln_norm = ln_beta(a, b);
    let mean = a / (a + b);
    let sd = (a * b / ((a + b) * (a + b) * (a + b + 1.0))).sqrt();
    let mut x = (mean + sd * norm_quantile(p)).clamp(1e-3 * mean, 1.0 - 1e-3 * (1.0 - mean));
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let f = beta_cdf(x, a, b) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let ln_dens = (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_norm;
        let step = f / ln_dens.exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
            // Geometric bisection while the bracket spans many orders of magnitude
            // near zero, where the quantile of a small-`a` beta lives.
            if lo > 0.0 && hi / lo > 1e3 {
                next = (lo * hi).sqrt();
            } else if lo == 0.0 && hi < 1e-3 {
                next = hi * 1e-3;
            }
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-14 * x.max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log Σ exp(x_i)`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_roundtrip() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-10] {
            let z = norm_quantile(p);
            assert!((norm_cdf(z) - p).abs() <= 1e-15_f64.max(p * 1e-13), "{p}");
        }
        assert_eq!(norm_quantile(0.5), 0.0);
    }

    #[test]
    fn beta_quantile_inverts_cdf() {
        for &(a, b) in &[(1.0, 1.0), (2.8, 1.2), (0.3, 0.5), (3.6, 0.4), (50.0, 7.0), (0.05, 0.2)] {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let x = beta_quantile(p, a, b);
                assert!(x > 0.0 && x < 1.0);
                assert!((beta_cdf(x, a, b) - p).abs() < 1e-11, "a={a} b={b} p={p} x={x}");
            }
        }
    }

    #[test]
    fn beta_quantile_uniform_is_identity() {
        assert!((beta_quantile(0.37, 1.0, 1.0) - 0.37).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_neg_infinity() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn expit_logit_inverse() {
        for &p in &[1e-9, 0.2, 0.5, 0.93] {
            assert!((expit(logit(p)) - p).abs() < 1e-15);
        }
    }
}
