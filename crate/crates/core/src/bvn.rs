//! Standard bivariate normal CDF.
//!
//! Drezner–Wesolowsky integration in the form refined by Genz (2004),
//! "Numerical computation of rectangular bivariate and trivariate normal and t
//! probabilities". Accuracy is close to double precision for all `|rho| <= 1`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::quadrature::legendre_symmetric;
use crate::special::norm_cdf;

struct Rules {
    r6: (Vec<f64>, Vec<f64>),
    r12: (Vec<f64>, Vec<f64>),
    r20: (Vec<f64>, Vec<f64>),
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules {
        r6: legendre_symmetric(6),
        r12: legendre_symmetric(12),
        r20: legendre_symmetric(20),
    })
}

/// `P(X <= a, Y <= b)` for standard normals with correlation `rho`.
pub fn bvn_cdf(a: f64, b: f64, rho: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return norm_cdf(b);
    }
    if b == f64::INFINITY {
        return norm_cdf(a);
    }
    if rho >= 1.0 {
        return norm_cdf(a.min(b));
    }
    if rho <= -1.0 {
        return (norm_cdf(a) - norm_cdf(-b)).max(0.0);
    }
    upper(-a, -b, rho).clamp(0.0, 1.0)
}

/// `P(X > h, Y > k)`.
fn upper(h: f64, k: f64, r: f64) -> f64 {
    let rules = rules();
    let (x, w) = if r.abs() < 0.3 {
        &rules.r6
    } else if r.abs() < 0.75 {
        &rules.r12
    } else {
        &rules.r20
    };
    let mut hk = h * k;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        let mut sum = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            let sn = (0.5 * asr * (xi + 1.0)).sin();
            sum += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return sum * asr / (4.0 * PI) + norm_cdf(-h) * norm_cdf(-k);
    }

    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let mut bvn = 0.0;
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -0.5 * (bs / as_ + hk);
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = (2.0 * PI).sqrt() * norm_cdf(-b / a);
            bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a *= 0.5;
        for (xi, wi) in x.iter().zip(w) {
            let xs = (a * (xi + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let asr = -0.5 * (bs / xs + hk);
            if asr > -100.0 {
                bvn += a
                    * wi
                    * asr.exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
        bvn = -bvn / (2.0 * PI);
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else if h >= k {
        -bvn
    } else {
        let l = if h < 0.0 {
            norm_cdf(k) - norm_cdf(h)
        } else {
            norm_cdf(-h) - norm_cdf(-k)
        };
        l - bvn
    }
}
