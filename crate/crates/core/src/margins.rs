//! Random-effects margins for the latent sensitivity/specificity and the
//! within-study binomial and beta-binomial distributions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    beta_cdf, beta_ln_pdf, beta_quantile, expit, ln_beta, ln_choose, logit, norm_cdf, norm_pdf, norm_quantile,
    softplus,
};

/// Dispersion below which a beta margin is treated as a point mass.
pub const POINT_MASS_GAMMA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginKind {
    /// Normal on the logit scale with mean `logit(π)` and SD `σ`.
    #[serde(rename = "normal")]
    NormalLogit,
    /// Beta with mean `π` and dispersion `γ = 1/(α + β + 1)`.
    Beta,
}

impl fmt::Display for MarginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarginKind::NormalLogit => "normal",
            MarginKind::Beta => "beta",
        })
    }
}

impl FromStr for MarginKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "normallogit" | "logit" => Ok(MarginKind::NormalLogit),
            "beta" => Ok(MarginKind::Beta),
            other => Err(Error::domain(format!("unknown margin '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub kind: MarginKind,
    pub pi: f64,
    /// `σ` for normal margins, `γ` for beta margins.
    pub scale: f64,
}

impl MarginSpec {
    pub fn new(kind: MarginKind, pi: f64, scale: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::domain(format!("margin mean must lie in (0, 1), got {pi}")));
        }
        match kind {
            MarginKind::NormalLogit if !(scale > 0.0 && scale.is_finite()) => {
                Err(Error::domain(format!("sigma must be positive, got {scale}")))
            }
            MarginKind::Beta if !(scale > 0.0 && scale < 1.0) => {
                Err(Error::domain(format!("gamma must lie in (0, 1), got {scale}")))
            }
            _ => Ok(MarginSpec { kind, pi, scale }),
        }
    }

    pub fn normal(pi: f64, sigma: f64) -> Result<Self> {
        Self::new(MarginKind::NormalLogit, pi, sigma)
    }

    pub fn beta(pi: f64, gamma: f64) -> Result<Self> {
        Self::new(MarginKind::Beta, pi, gamma)
    }

    pub fn with_params(&self, pi: f64, scale: f64) -> Result<Self> {
        Self::new(self.kind, pi, scale)
    }

    /// Latent probability at quantile level `u`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        latent_probability(u, self)
    }

    /// `(log x, log(1 - x))` of the latent probability at level `u`, without
    /// losing precision at either tail on the logit scale.
    pub fn log_probs(&self, u: f64) -> Result<(f64, f64)> {
        check_level(u)?;
        Ok(match self.kind {
            MarginKind::NormalLogit => {
                let eta = logit(self.pi) + self.scale * norm_quantile(u);
                (-softplus(-eta), -softplus(eta))
            }
            MarginKind::Beta => {
                let s = beta_shape(self.pi, self.scale)?;
                if s.is_point_mass() {
                    (self.pi.ln(), (-self.pi).ln_1p())
                } else {
                    // For the upper tail invert the reflected beta so that 1 - x
                    // keeps its relative precision.
                    if u > 0.5 {
                        let y = beta_quantile(1.0 - u, s.beta, s.alpha);
                        ((-y).ln_1p(), y.ln())
                    } else {
                        let x = beta_quantile(u, s.alpha, s.beta);
                        (x.ln(), (-x).ln_1p())
                    }
                }
            }
        })
    }

    /// Distribution function of the latent probability.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self.kind {
            MarginKind::NormalLogit => norm_cdf((logit(x) - logit(self.pi)) / self.scale),
            MarginKind::Beta => {
                let s = beta_shape(self.pi, self.scale).expect("validated margin");
                beta_cdf(x, s.alpha, s.beta)
            }
        }
    }

    /// Log density of the latent probability on (0, 1).
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            MarginKind::NormalLogit => {
                let z = (logit(x) - logit(self.pi)) / self.scale;
                norm_pdf(z).ln() - self.scale.ln() - x.ln() - (-x).ln_1p()
            }
            MarginKind::Beta => {
                let s = beta_shape(self.pi, self.scale).expect("validated margin");
                beta_ln_pdf(x, s.alpha, s.beta)
            }
        }
    }
}

fn check_level(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0, 1), got {u}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    /// Mean and dispersion `(π, γ)` of the shape.
    pub fn mean_dispersion(&self) -> (f64, f64) {
        let s = self.alpha + self.beta;
        (self.alpha / s, 1.0 / (s + 1.0))
    }

    /// The zero-dispersion limit: all mass at the mean.
    pub fn is_point_mass(&self) -> bool {
        1.0 / (self.alpha + self.beta + 1.0) < POINT_MASS_GAMMA
    }
}

pub fn beta_shape(pi: f64, gamma: f64) -> Result<BetaShape> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::domain(format!("pi must lie in (0, 1), got {pi}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let k = 1.0 / gamma - 1.0;
    Ok(BetaShape { alpha: pi * k, beta: (1.0 - pi) * k })
}

pub fn latent_probability(u: f64, margin: &MarginSpec) -> Result<f64> {
    check_level(u)?;
    match margin.kind {
        MarginKind::NormalLogit => Ok(expit(logit(margin.pi) + margin.scale * norm_quantile(u))),
        MarginKind::Beta => {
            let s = beta_shape(margin.pi, margin.scale)?;
            if s.is_point_mass() {
                Ok(margin.pi)
            } else {
                Ok(beta_quantile(u, s.alpha, s.beta))
            }
        }
    }
}

/// One study's 2×2 table: `y1` true positives among `n1` diseased and `y2` true
/// negatives among `n2` non-diseased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StudyRecord {
    pub y1: u32,
    pub n1: u32,
    pub y2: u32,
    pub n2: u32,
}

impl StudyRecord {
    pub fn new(y1: u32, n1: u32, y2: u32, n2: u32) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Validation { line: None, msg: format!("empty arm (n1 = {n1}, n2 = {n2})") });
        }
        if y1 > n1 || y2 > n2 {
            return Err(Error::Validation {
                line: None,
                msg: format!("count exceeds arm size (y1 = {y1}/{n1}, y2 = {y2}/{n2})"),
            });
        }
        Ok(StudyRecord { y1, n1, y2, n2 })
    }

    /// The same study with the roles of sensitivity and specificity swapped.
    pub fn swapped(&self) -> Self {
        StudyRecord { y1: self.y2, n1: self.n2, y2: self.y1, n2: self.n1 }
    }

    pub fn tp(&self) -> u32 {
        self.y1
    }
    pub fn fn_(&self) -> u32 {
        self.n1 - self.y1
    }
    pub fn fp(&self) -> u32 {
        self.n2 - self.y2
    }
    pub fn tn(&self) -> u32 {
        self.y2
    }
}

fn check_count(y: u32, n: u32) -> Result<()> {
    if y > n {
        return Err(Error::domain(format!("count {y} exceeds size {n}")));
    }
    Ok(())
}

pub fn binomial_logpmf(y: u32, n: u32, p: f64) -> Result<f64> {
    check_count(y, n)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(binomial_logpmf_ln(y, n, p.ln(), (-p).ln_1p()))
}

/// Binomial log pmf from `log p` and `log(1 - p)`.
#[inline]
pub(crate) fn binomial_logpmf_ln(y: u32, n: u32, ln_p: f64, ln_q: f64) -> f64 {
    let a = if y == 0 { 0.0 } else { y as f64 * ln_p };
    let b = if y == n { 0.0 } else { (n - y) as f64 * ln_q };
    ln_choose(n as u64, y as u64) + a + b
}

pub fn betabinomial_logpmf(y: u32, n: u32, pi: f64, gamma: f64) -> Result<f64> {
    check_count(y, n)?;
    let s = beta_shape(pi, gamma)?;
    if s.is_point_mass() {
        return binomial_logpmf(y, n, pi);
    }
    Ok(ln_choose(n as u64, y as u64) + ln_beta(y as f64 + s.alpha, (n - y) as f64 + s.beta)
        - ln_beta(s.alpha, s.beta))
}

pub fn betabinomial_cdf(y: u32, n: u32, pi: f64, gamma: f64) -> Result<f64> {
    check_count(y, n)?;
    if y == n {
        beta_shape(pi, gamma)?;
        return Ok(1.0);
    }
    let mut total = 0.0;
    for k in 0..=y {
        total += betabinomial_logpmf(k, n, pi, gamma)?.exp();
    }
    Ok(total.min(1.0))
}

/// All cumulative beta-binomial probabilities `H(0), ..., H(n)` together with
/// the log pmf values.
pub(crate) fn betabinomial_table(n: u32, pi: f64, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ln_pmf = Vec::with_capacity(n as usize + 1);
    let mut cdf = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    for k in 0..=n {
        let l = betabinomial_logpmf(k, n, pi, gamma)?;
        acc += l.exp();
        ln_pmf.push(l);
        cdf.push(acc.min(1.0));
    }
    cdf[n as usize] = 1.0;
    Ok((ln_pmf, cdf))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tanh-sinh rule for `∫₀¹ f`, robust to integrable endpoint singularities.
    fn tanh_sinh(f: impl Fn(f64, f64) -> f64) -> f64 {
        // f receives (x, 1 - x) so the integrand can be evaluated without
        // cancellation near x = 1.
        let h = 1.0 / 64.0;
        let mut sum = 0.0;
        let half_pi = std::f64::consts::FRAC_PI_2;
        for k in -400i32..=400 {
            let t = k as f64 * h;
            let s = half_pi * t.sinh();
            let c = s.cosh();
            // x = (1 + tanh s)/2 and 1 - x = (1 - tanh s)/2 = 1/(1 + e^{2s})
            let one_minus = 1.0 / (1.0 + (2.0 * s).exp());
            let x = 1.0 / (1.0 + (-2.0 * s).exp());
            if x <= 0.0 || one_minus <= 0.0 {
                continue;
            }
            let w = half_pi * t.cosh() / (c * c) * 0.5;
            let v = f(x, one_minus);
            if v.is_finite() {
                sum += w * v;
            }
        }
        sum * h
    }

    fn betabin_by_integral(y: u32, n: u32, pi: f64, gamma: f64) -> f64 {
        let s = beta_shape(pi, gamma).unwrap();
        let lc = ln_choose(n as u64, y as u64) - ln_beta(s.alpha, s.beta);
        tanh_sinh(|x, xm| {
            (lc + (y as f64 + s.alpha - 1.0) * x.ln() + ((n - y) as f64 + s.beta - 1.0) * xm.ln()).exp()
        })
    }

    #[test]
    fn beta_shape_examples() {
        let s = beta_shape(0.5, 1.0 / 3.0).unwrap();
        assert!((s.alpha - 1.0).abs() < 1e-15 && (s.beta - 1.0).abs() < 1e-15);
        let s = beta_shape(0.7, 0.2).unwrap();
        assert!((s.alpha - 2.8).abs() < 1e-14 && (s.beta - 1.2).abs() < 1e-14);
        let (p, g) = s.mean_dispersion();
        assert!((p - 0.7).abs() < 1e-15 && (g - 0.2).abs() < 1e-15);
        assert!(beta_shape(0.4, 1e-12).unwrap().is_point_mass());
        assert!(beta_shape(0.4, 1.0).is_err());
        assert!(beta_shape(0.4, 0.0).is_err());
    }

    #[test]
    fn latent_probability_medians() {
        let b = MarginSpec::beta(0.5, 1.0 / 3.0).unwrap();
        assert!((latent_probability(0.5, &b).unwrap() - 0.5).abs() < 1e-14);
        let n = MarginSpec::normal(0.7, 2.0).unwrap();
        assert!((latent_probability(0.5, &n).unwrap() - 0.7).abs() < 1e-15);
        assert!(latent_probability(0.0, &n).is_err());
        assert!(latent_probability(1.0, &b).is_err());
    }

    #[test]
    fn beta_latent_quantile() {
        let m = MarginSpec::beta(0.7, 0.2).unwrap();
        let x = latent_probability(0.9, &m).unwrap();
        assert!((beta_cdf(x, 2.8, 1.2) - 0.9).abs() < 1e-12);
        let (lp, lq) = m.log_probs(0.9).unwrap();
        assert!((lp.exp() - x).abs() < 1e-12 && (lq.exp() - (1.0 - x)).abs() < 1e-12);
    }

    #[test]
    fn latent_probability_strictly_increasing() {
        for m in [
            MarginSpec::beta(0.7, 0.2).unwrap(),
            MarginSpec::beta(0.9, 0.1).unwrap(),
            MarginSpec::beta(0.3, 0.6).unwrap(),
            MarginSpec::normal(0.8, 1.5).unwrap(),
            MarginSpec::normal(0.2, 0.1).unwrap(),
        ] {
            let mut prev = 0.0;
            for i in 1..1000 {
                let x = latent_probability(i as f64 / 1000.0, &m).unwrap();
                assert!(x > prev, "{m:?} at {i}");
                prev = x;
            }
        }
    }

    #[test]
    fn tiny_sigma_concentrates() {
        let m = MarginSpec::normal(0.63, 1e-6).unwrap();
        for i in 1..=99 {
            let x = latent_probability(i as f64 / 100.0, &m).unwrap();
            assert!((x - 0.63).abs() < 1e-6);
        }
    }

    #[test]
    fn margin_cdf_inverts_quantile() {
        for m in [MarginSpec::beta(0.7, 0.2).unwrap(), MarginSpec::normal(0.9, 1.0).unwrap()] {
            for &u in &[0.01, 0.3, 0.5, 0.93] {
                let x = m.quantile(u).unwrap();
                assert!((m.cdf(x) - u).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn margin_density_integrates() {
        for m in [MarginSpec::beta(0.7, 0.2).unwrap(), MarginSpec::normal(0.6, 0.8).unwrap()] {
            let total = tanh_sinh(|x, _| m.ln_pdf(x).exp());
            assert!((total - 1.0).abs() < 1e-9, "{m:?}: {total}");
        }
    }

    #[test]
    fn binomial_examples() {
        assert!((binomial_logpmf(1, 2, 0.5).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((binomial_logpmf(0, 5, 0.2).unwrap() - 5.0 * 0.8f64.ln()).abs() < 1e-14);
        let direct = 120.0 * 0.73f64.powi(7) * 0.27f64.powi(3);
        assert!((binomial_logpmf(7, 10, 0.73).unwrap() - direct.ln()).abs() < 1e-13);
        assert_eq!(binomial_logpmf(0, 4, 0.0).unwrap(), 0.0);
        assert_eq!(binomial_logpmf(4, 4, 1.0).unwrap(), 0.0);
        assert!(binomial_logpmf(5, 4, 0.5).is_err());
        let s: f64 = (0..=30).map(|y| binomial_logpmf(y, 30, 0.37).unwrap().exp()).sum();
        assert!((s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn large_n_stays_finite() {
        let l = binomial_logpmf(6000, 10_000, 0.6).unwrap();
        assert!(l.is_finite() && l < 0.0);
        let l = betabinomial_logpmf(6000, 10_000, 0.6, 0.05).unwrap();
        assert!(l.is_finite() && l < 0.0);
    }

    #[test]
    fn betabinomial_examples() {
        assert!((betabinomial_logpmf(1, 2, 0.5, 1.0 / 3.0).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-14);
        let mean: f64 = (0..=10).map(|y| y as f64 * betabinomial_logpmf(y, 10, 0.7, 0.2).unwrap().exp()).sum();
        assert!((mean - 7.0).abs() < 1e-12);
        let want = betabin_by_integral(3, 8, 0.6, 0.15);
        let got = betabinomial_logpmf(3, 8, 0.6, 0.15).unwrap().exp();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn betabinomial_moments() {
        for &(n, pi, g) in &[(10u32, 0.7, 0.2), (37, 0.15, 0.05), (50, 0.9, 0.6)] {
            let (mut m, mut m2, mut tot) = (0.0, 0.0, 0.0);
            for y in 0..=n {
                let p = betabinomial_logpmf(y, n, pi, g).unwrap().exp();
                tot += p;
                m += y as f64 * p;
                m2 += (y as f64).powi(2) * p;
            }
            let nf = n as f64;
            assert!((tot - 1.0).abs() < 1e-12);
            assert!((m - nf * pi).abs() < 1e-10);
            let var = m2 - m * m;
            assert!((var - nf * pi * (1.0 - pi) * (1.0 + (nf - 1.0) * g)).abs() < 1e-8);
        }
    }

    #[test]
    fn betabinomial_matches_integral_oracle() {
        for &(pi, g) in &[(0.7, 0.2), (0.9, 0.1), (0.3, 0.5), (0.5, 0.02)] {
            for &n in &[1u32, 7, 20, 50] {
                for y in 0..=n {
                    let got = betabinomial_logpmf(y, n, pi, g).unwrap().exp();
                    let want = betabin_by_integral(y, n, pi, g);
                    assert!((got - want).abs() < 1e-10, "y={y} n={n} pi={pi} g={g}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn betabinomial_cdf_properties() {
        assert_eq!(betabinomial_cdf(10, 10, 0.4, 0.3).unwrap(), 1.0);
        let mut prev = 0.0;
        for y in 0..=15 {
            let c = betabinomial_cdf(y, 15, 0.4, 0.3).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        let (lp, cdf) = betabinomial_table(15, 0.4, 0.3).unwrap();
        assert_eq!(lp.len(), 16);
        assert!((cdf[7] - betabinomial_cdf(7, 15, 0.4, 0.3).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn study_record_validation() {
        assert!(StudyRecord::new(3, 10, 8, 10).is_ok());
        assert!(StudyRecord::new(0, 0, 0, 0).is_err());
        assert!(StudyRecord::new(11, 10, 8, 10).is_err());
        let s = StudyRecord::new(25, 30, 60, 70).unwrap();
        assert_eq!((s.tp(), s.fn_(), s.fp(), s.tn()), (25, 5, 10, 60));
        assert_eq!(s.swapped().swapped(), s);
    }
}
