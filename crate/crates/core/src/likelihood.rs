//! Log-likelihoods of the mixed models.
//!
//! The copula mixed model integrates the two binomial within-study
//! distributions against the random-effects distribution built from a copula
//! and two margins. The double integral is evaluated on the dependent
//! quadrature grid of [`crate::quadrature::dependent_nodes`] in log space.
//! The KHS approximation and the Sarmanov model have closed forms.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaKind, CopulaSpec, Family};
use crate::error::{Error, Result};
use crate::margins::{betabinomial_logpmf, betabinomial_table, MarginKind, MarginSpec, StudyRecord};
use crate::quadrature::{dependent_nodes, QuadRule};
use crate::special::{ln_choose, log_sum_exp};

/// Beta-binomial CDF values are kept this far from 0 and 1 before the copula
/// density is evaluated in the KHS likelihood.
pub const KHS_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    CopulaMixed,
    Khs,
    Sarmanov,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::CopulaMixed => "copula",
            Variant::Khs => "khs",
            Variant::Sarmanov => "sarmanov",
        })
    }
}

/// How the two latent accuracies are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum Dependence {
    /// Copula mixed model: exact likelihood by quadrature.
    Copula(CopulaSpec),
    /// Copula applied to the beta-binomial CDFs of the observed counts.
    Khs(CopulaSpec),
    /// Sarmanov density with kernels `x_j - π_j` and parameter θ.
    Sarmanov(f64),
}

/// A fully parameterised model. Component 1 is sensitivity, component 2 is
/// specificity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub margin1: MarginSpec,
    pub margin2: MarginSpec,
    pub dependence: Dependence,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dependence {
            Dependence::Copula(c) => write!(f, "{}/{}", c, self.margin1.kind),
            Dependence::Khs(c) => write!(f, "khs-{}/{}", c, self.margin1.kind),
            Dependence::Sarmanov(_) => write!(f, "sarmanov/{}", self.margin1.kind),
        }
    }
}

/// Parses model names such as `clayton270/beta`, `bvn/normal`, `khs-bvn/beta`
/// or `sarmanov/beta` into a template at independence with unit-ish scales.
/// `glmm` is accepted for `bvn/normal`; `khs` and `sarmanov` default to beta
/// margins and `khs` to the BVN copula.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        let name = if name == "glmm" { "bvn/normal".to_string() } else { name };
        let (dep, margin) = match name.split_once('/') {
            Some((d, m)) => (d.to_string(), m.parse::<MarginKind>()?),
            None if name.starts_with("khs") || name == "sarmanov" => (name.clone(), MarginKind::Beta),
            None => return Err(Error::domain(format!("model '{s}' needs a margin, e.g. '{name}/beta'"))),
        };
        let m = match margin {
            MarginKind::NormalLogit => MarginSpec::normal(0.5, 1.0)?,
            MarginKind::Beta => MarginSpec::beta(0.5, 0.1)?,
        };
        if dep == "sarmanov" {
            return ModelSpec::sarmanov(m, m, 0.0);
        }
        if let Some(rest) = dep.strip_prefix("khs") {
            let kind = match rest.strip_prefix('-') {
                Some(c) => c.parse::<CopulaKind>()?,
                None if rest.is_empty() => CopulaKind::BVN,
                None => return Err(Error::domain(format!("unknown model '{s}'"))),
            };
            return ModelSpec::khs(m, m, kind.independence());
        }
        Ok(ModelSpec::copula_mixed(m, m, dep.parse::<CopulaKind>()?.independence()))
    }
}

impl ModelSpec {
    pub fn copula_mixed(margin1: MarginSpec, margin2: MarginSpec, copula: CopulaSpec) -> Self {
        ModelSpec { margin1, margin2, dependence: Dependence::Copula(copula) }
    }

    pub fn khs(margin1: MarginSpec, margin2: MarginSpec, copula: CopulaSpec) -> Result<Self> {
        if margin1.kind != MarginKind::Beta || margin2.kind != MarginKind::Beta {
            return Err(Error::domain("the KHS approximation requires beta margins"));
        }
        Ok(ModelSpec { margin1, margin2, dependence: Dependence::Khs(copula) })
    }

    pub fn sarmanov(margin1: MarginSpec, margin2: MarginSpec, theta: f64) -> Result<Self> {
        if margin1.kind != MarginKind::Beta || margin2.kind != MarginKind::Beta {
            return Err(Error::domain("the Sarmanov model requires beta margins"));
        }
        if !theta.is_finite() {
            return Err(Error::domain(format!("Sarmanov parameter must be finite, got {theta}")));
        }
        Ok(ModelSpec { margin1, margin2, dependence: Dependence::Sarmanov(theta) })
    }

    pub fn variant(&self) -> Variant {
        match self.dependence {
            Dependence::Copula(_) => Variant::CopulaMixed,
            Dependence::Khs(_) => Variant::Khs,
            Dependence::Sarmanov(_) => Variant::Sarmanov,
        }
    }

    pub fn margin_kind(&self) -> MarginKind {
        self.margin1.kind
    }

    /// The copula, if the model has one.
    pub fn copula(&self) -> Option<CopulaSpec> {
        match self.dependence {
            Dependence::Copula(c) | Dependence::Khs(c) => Some(c),
            Dependence::Sarmanov(_) => None,
        }
    }

    pub fn copula_kind(&self) -> Option<CopulaKind> {
        self.copula().map(|c| c.kind())
    }

    /// Dependence parameter θ.
    pub fn theta(&self) -> f64 {
        match self.dependence {
            Dependence::Copula(c) | Dependence::Khs(c) => c.theta(),
            Dependence::Sarmanov(t) => t,
        }
    }

    /// `(π1, π2, scale1, scale2, θ)`.
    pub fn params(&self) -> [f64; 5] {
        [self.margin1.pi, self.margin2.pi, self.margin1.scale, self.margin2.scale, self.theta()]
    }

    /// Same structure with new parameters, validated.
    pub fn with_params(&self, p: &[f64; 5]) -> Result<Self> {
        let margin1 = self.margin1.with_params(p[0], p[2])?;
        let margin2 = self.margin2.with_params(p[1], p[3])?;
        let dependence = match self.dependence {
            Dependence::Copula(c) => Dependence::Copula(c.with_theta(p[4])?),
            Dependence::Khs(c) => Dependence::Khs(c.with_theta(p[4])?),
            Dependence::Sarmanov(_) => {
                if !p[4].is_finite() {
                    return Err(Error::domain("Sarmanov parameter must be finite"));
                }
                Dependence::Sarmanov(p[4])
            }
        };
        Ok(ModelSpec { margin1, margin2, dependence })
    }

    /// Kendall's tau of the random-effects distribution. For the Sarmanov
    /// model this is the tau of the beta-margined Sarmanov density.
    pub fn tau(&self) -> f64 {
        match self.dependence {
            Dependence::Copula(c) | Dependence::Khs(c) => c.tau().value(),
            Dependence::Sarmanov(t) => sarmanov_tau(&self.margin1, &self.margin2, t),
        }
    }

    /// The model with components 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        let dependence = match self.dependence {
            Dependence::Copula(c) => Dependence::Copula(c.transposed()),
            Dependence::Khs(c) => Dependence::Khs(c.transposed()),
            s => s,
        };
        ModelSpec { margin1: self.margin2, margin2: self.margin1, dependence }
    }

    /// Evaluate the log-likelihood of this model on `data`.
    pub fn loglik(&self, data: &[StudyRecord], rule: &QuadRule) -> Result<LogLikResult> {
        match self.dependence {
            Dependence::Copula(_) => loglik_copula_mixed(data, self, rule),
            Dependence::Khs(_) => loglik_khs(data, self),
            Dependence::Sarmanov(t) => loglik_sarmanov(
                data,
                self.margin1.pi,
                self.margin2.pi,
                self.margin1.scale,
                self.margin2.scale,
                t,
            ),
        }
    }
}

/// Kendall's tau of the Sarmanov density `f1 f2 (1 + θ (x1 - π1)(x2 - π2))`,
/// which is `8θ E[(X1 - π1) F1(X1)] E[(X2 - π2) F2(X2)]`.
fn sarmanov_tau(m1: &MarginSpec, m2: &MarginSpec, theta: f64) -> f64 {
    let rule = crate::quadrature::gauss_legendre(100).expect("static size");
    let moment = |m: &MarginSpec| {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&u, &w)| w * (m.quantile(u).unwrap_or(m.pi) - m.pi) * u)
            .sum::<f64>()
    };
    8.0 * theta * moment(m1) * moment(m2)
}

/// Total and per-study log-likelihood contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikResult {
    pub total: f64,
    pub per_study: Vec<f64>,
    /// KHS only: number of CDF values moved onto the clamp boundary.
    pub clamp_events: usize,
}

impl LogLikResult {
    fn from_terms(per_study: Vec<f64>, clamp_events: usize) -> Self {
        // compensated summation keeps `total` independent of study count drift
        let mut sum = 0.0;
        let mut c = 0.0;
        for &x in &per_study {
            let y = x - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        LogLikResult { total: sum, per_study, clamp_events }
    }
}

fn check_data(data: &[StudyRecord]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::domain("no studies"));
    }
    Ok(())
}

/// Binomial log pmf with the study-specific constant split off.
#[derive(Clone, Copy)]
struct Counts {
    y: f64,
    m: f64,
    ln_c: f64,
    all: bool,
    none: bool,
}

impl Counts {
    fn new(y: u32, n: u32) -> Self {
        Counts { y: y as f64, m: (n - y) as f64, ln_c: ln_choose(n as u64, y as u64), all: y == n, none: y == 0 }
    }

    #[inline]
    fn ln_pmf(&self, lp: (f64, f64)) -> f64 {
        let a = if self.none { 0.0 } else { self.y * lp.0 };
        let b = if self.all { 0.0 } else { self.m * lp.1 };
        self.ln_c + a + b
    }
}

pub fn loglik_copula_mixed(data: &[StudyRecord], model: &ModelSpec, rule: &QuadRule) -> Result<LogLikResult> {
    check_data(data)?;
    let copula = match model.dependence {
        Dependence::Copula(c) => c,
        _ => return Err(Error::domain("loglik_copula_mixed requires the copula mixed variant")),
    };
    let (m1, m2) = (&model.margin1, &model.margin2);
    let nq = rule.len();
    let ln_w: Vec<f64> = rule.weights.iter().map(|w| w.ln()).collect();
    let lp1: Vec<(f64, f64)> = rule.nodes.iter().map(|&u| m1.log_probs(u)).collect::<Result<_>>()?;

    let degenerate = copula.family() == Family::Bvn && copula.theta().abs() == 1.0;
    let mut per_study = Vec::with_capacity(data.len());
    if degenerate {
        // v = 1 - u (or v = u): the double integral collapses to a single one.
        let lp2: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .map(|&u| m2.log_probs(if copula.theta() < 0.0 { 1.0 - u } else { u }))
            .collect::<Result<_>>()?;
        let mut terms = vec![0.0; nq];
        for (i, s) in data.iter().enumerate() {
            let (c1, c2) = (Counts::new(s.y1, s.n1), Counts::new(s.y2, s.n2));
            for q in 0..nq {
                terms[q] = ln_w[q] + c1.ln_pmf(lp1[q]) + c2.ln_pmf(lp2[q]);
            }
            per_study.push(finite(log_sum_exp(&terms), i)?);
        }
        return Ok(LogLikResult::from_terms(per_study, 0));
    }

    let grid = dependent_nodes(rule, &copula)?;
    let lp2: Vec<(f64, f64)> = grid.v.iter().map(|&v| m2.log_probs(v)).collect::<Result<_>>()?;
    let mut inner = vec![0.0; nq];
    let mut outer = vec![0.0; nq];
    for (i, s) in data.iter().enumerate() {
        let (c1, c2) = (Counts::new(s.y1, s.n1), Counts::new(s.y2, s.n2));
        for q1 in 0..nq {
            let row = &lp2[q1 * nq..(q1 + 1) * nq];
            for q2 in 0..nq {
                inner[q2] = ln_w[q2] + c2.ln_pmf(row[q2]);
            }
            outer[q1] = ln_w[q1] + c1.ln_pmf(lp1[q1]) + log_sum_exp(&inner);
        }
        per_study.push(finite(log_sum_exp(&outer), i)?);
    }
    Ok(LogLikResult::from_terms(per_study, 0))
}

fn finite(x: f64, study: usize) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Evaluation { study, reason: format!("log-likelihood contribution is {x}") })
    }
}

/// The classical GLMM: binomial within-study layer and bivariate normal
/// random effects on the logit scale.
pub fn loglik_glmm(
    data: &[StudyRecord],
    pi1: f64,
    pi2: f64,
    sigma1: f64,
    sigma2: f64,
    rho: f64,
    rule: &QuadRule,
) -> Result<LogLikResult> {
    let model = ModelSpec::copula_mixed(
        MarginSpec::normal(pi1, sigma1)?,
        MarginSpec::normal(pi2, sigma2)?,
        CopulaSpec::new(Family::Bvn, crate::copulas::Rotation::R0, rho)?,
    );
    loglik_copula_mixed(data, &model, rule)
}

pub fn loglik_khs(data: &[StudyRecord], model: &ModelSpec) -> Result<LogLikResult> {
    check_data(data)?;
    let copula = match model.dependence {
        Dependence::Khs(c) => c,
        _ => return Err(Error::domain("loglik_khs requires the KHS variant")),
    };
    let (m1, m2) = (&model.margin1, &model.margin2);
    if m1.kind != MarginKind::Beta || m2.kind != MarginKind::Beta {
        return Err(Error::domain("the KHS approximation requires beta margins"));
    }
    let mut tables1: HashMap<u32, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut tables2: HashMap<u32, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut clamps = 0;
    let mut per_study = Vec::with_capacity(data.len());
    for (i, s) in data.iter().enumerate() {
        if !tables1.contains_key(&s.n1) {
            tables1.insert(s.n1, betabinomial_table(s.n1, m1.pi, m1.scale)?);
        }
        if !tables2.contains_key(&s.n2) {
            tables2.insert(s.n2, betabinomial_table(s.n2, m2.pi, m2.scale)?);
        }
        let (lh1, cdf1) = &tables1[&s.n1];
        let (lh2, cdf2) = &tables2[&s.n2];
        let mut clamp = |h: f64| {
            let c = h.clamp(KHS_CLAMP, 1.0 - KHS_CLAMP);
            if c != h {
                clamps += 1;
            }
            c
        };
        let h1 = clamp(cdf1[s.y1 as usize]);
        let h2 = clamp(cdf2[s.y2 as usize]);
        let ln_c = copula.ln_density(h1, h2).map_err(|e| Error::Evaluation { study: i, reason: e.to_string() })?;
        per_study.push(finite(ln_c + lh1[s.y1 as usize] + lh2[s.y2 as usize], i)?);
    }
    Ok(LogLikResult::from_terms(per_study, clamps))
}

pub fn loglik_sarmanov(
    data: &[StudyRecord],
    pi1: f64,
    pi2: f64,
    gamma1: f64,
    gamma2: f64,
    theta: f64,
) -> Result<LogLikResult> {
    check_data(data)?;
    let kernel = |y: u32, n: u32, pi: f64, gamma: f64| (y as f64 - n as f64 * pi) / (1.0 / gamma + n as f64 - 1.0);
    let mut per_study = Vec::with_capacity(data.len());
    for (i, s) in data.iter().enumerate() {
        let k1 = kernel(s.y1, s.n1, pi1, gamma1);
        let k2 = kernel(s.y2, s.n2, pi2, gamma2);
        let bracket = 1.0 + theta * k1 * k2;
        // the bracket is bilinear in (k1, k2), so the corners of the study's
        // outcome grid bound it; this keeps the study's pmf proper
        let worst = [(0, 0), (s.n1, 0), (0, s.n2), (s.n1, s.n2)]
            .iter()
            .map(|&(a, b)| 1.0 + theta * kernel(a, s.n1, pi1, gamma1) * kernel(b, s.n2, pi2, gamma2))
            .fold(bracket, f64::min);
        if worst < 0.0 || bracket <= 0.0 {
            return Err(Error::Domain(format!(
                "Sarmanov parameter {theta} outside the admissible range at study {i} (bracket {worst})"
            )));
        }
        let l = betabinomial_logpmf(s.y1, s.n1, pi1, gamma1)? + betabinomial_logpmf(s.y2, s.n2, pi2, gamma2)?
            + bracket.ln();
        per_study.push(finite(l, i)?);
    }
    Ok(LogLikResult::from_terms(per_study, 0))
}

/// Range of θ for which every study's Sarmanov pmf is proper under beta
/// margins `(π1, γ1)` and `(π2, γ2)`.
pub fn sarmanov_admissible_range(data: &[StudyRecord], pi1: f64, pi2: f64, gamma1: f64, gamma2: f64) -> (f64, f64) {
    let kernel = |y: u32, n: u32, pi: f64, gamma: f64| (y as f64 - n as f64 * pi) / (1.0 / gamma + n as f64 - 1.0);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in data {
        for (a, b) in [(0, 0), (s.n1, 0), (0, s.n2), (s.n1, s.n2)] {
            let c = kernel(a, s.n1, pi1, gamma1) * kernel(b, s.n2, pi2, gamma2);
            if c > 0.0 {
                lo = lo.max(-1.0 / c);
            } else if c < 0.0 {
                hi = hi.min(-1.0 / c);
            }
        }
    }
    (lo, hi)
}

/// Admissible Sarmanov parameter range for the given margins, from the
/// requirement `1 + θ (x1 - π1)(x2 - π2) ≥ 0` on the unit square.
pub fn sarmanov_theta_bounds(pi1: f64, pi2: f64) -> (f64, f64) {
    // extreme products of (x1 - π1)(x2 - π2) over the corners
    let corners = [
        (0.0 - pi1) * (0.0 - pi2),
        (1.0 - pi1) * (1.0 - pi2),
        (0.0 - pi1) * (1.0 - pi2),
        (1.0 - pi1) * (0.0 - pi2),
    ];
    let max = corners.iter().copied().fold(f64::MIN, f64::max);
    let min = corners.iter().copied().fold(f64::MAX, f64::min);
    (-1.0 / max, -1.0 / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::Rotation;
    use crate::margins::binomial_logpmf;
    use crate::quadrature::gauss_legendre;

    fn study() -> Vec<StudyRecord> {
        vec![StudyRecord::new(3, 10, 8, 10).unwrap()]
    }

    #[test]
    fn model_names_roundtrip() {
        for name in ["bvn/normal", "frank/beta", "clayton90/beta", "khs-clayton270/beta", "sarmanov/beta"] {
            assert_eq!(name.parse::<ModelSpec>().unwrap().to_string(), name);
        }
        assert_eq!("glmm".parse::<ModelSpec>().unwrap().to_string(), "bvn/normal");
        assert_eq!("khs".parse::<ModelSpec>().unwrap().to_string(), "khs-bvn/beta");
        assert!("khs/normal".parse::<ModelSpec>().is_err());
        assert!("clayton270".parse::<ModelSpec>().is_err());
        assert!("gumbel/beta".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn independence_factorises_beta() {
        let rule = gauss_legendre(15).unwrap();
        let (m1, m2) = (MarginSpec::beta(0.7, 0.2).unwrap(), MarginSpec::beta(0.9, 0.1).unwrap());
        let model = ModelSpec::copula_mixed(m1, m2, CopulaSpec::independence());
        let got = loglik_copula_mixed(&study(), &model, &rule).unwrap().total;
        let want = betabinomial_logpmf(3, 10, 0.7, 0.2).unwrap() + betabinomial_logpmf(8, 10, 0.9, 0.1).unwrap();
        // the beta quantile function is not smooth at the ends, so 15 nodes are coarse
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        let rule = gauss_legendre(200).unwrap();
        let got = loglik_copula_mixed(&study(), &model, &rule).unwrap().total;
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn tiny_sigma_reduces_to_binomial() {
        let rule = gauss_legendre(15).unwrap();
        let (m1, m2) = (MarginSpec::normal(0.7, 1e-6).unwrap(), MarginSpec::normal(0.9, 1e-6).unwrap());
        let want = binomial_logpmf(3, 10, 0.7).unwrap() + binomial_logpmf(8, 10, 0.9).unwrap();
        for c in [CopulaSpec::independence(), CopulaKind::CLAYTON270.with_tau(-0.5).unwrap()] {
            let got = loglik_copula_mixed(&study(), &ModelSpec::copula_mixed(m1, m2, c), &rule).unwrap().total;
            assert!((got - want).abs() < 1e-4);
        }
    }

    #[test]
    fn khs_and_copula_agree_at_independence() {
        let (m1, m2) = (MarginSpec::beta(0.6, 0.1).unwrap(), MarginSpec::beta(0.8, 0.1).unwrap());
        let data = vec![StudyRecord::new(2, 5, 4, 5).unwrap(), StudyRecord::new(7, 9, 30, 31).unwrap()];
        let khs = ModelSpec::khs(m1, m2, CopulaSpec::independence()).unwrap();
        let k = loglik_khs(&data, &khs).unwrap().total;
        let exact: f64 = data
            .iter()
            .map(|s| {
                betabinomial_logpmf(s.y1, s.n1, 0.6, 0.1).unwrap() + betabinomial_logpmf(s.y2, s.n2, 0.8, 0.1).unwrap()
            })
            .sum();
        assert!((k - exact).abs() < 1e-12);
    }

    #[test]
    fn khs_clamp_at_upper_end() {
        let (m1, m2) = (MarginSpec::beta(0.6, 0.1).unwrap(), MarginSpec::beta(0.8, 0.1).unwrap());
        let khs = ModelSpec::khs(m1, m2, CopulaKind::BVN.with_theta(-0.5).unwrap()).unwrap();
        let data = vec![StudyRecord::new(5, 5, 5, 5).unwrap()];
        let r = loglik_khs(&data, &khs).unwrap();
        assert!(r.total.is_finite());
        assert_eq!(r.clamp_events, 2);
    }

    #[test]
    fn sarmanov_admissibility() {
        let data = vec![StudyRecord::new(0, 10, 0, 10).unwrap()];
        // k1 = k2 = -n π/(1/γ + n - 1) < 0, so a large negative θ breaks the bracket
        assert!(loglik_sarmanov(&data, 0.7, 0.9, 0.2, 0.1, -50.0).is_err());
        let a = loglik_sarmanov(&data, 0.7, 0.9, 0.2, 0.1, 0.0).unwrap().total;
        let b = betabinomial_logpmf(0, 10, 0.7, 0.2).unwrap() + betabinomial_logpmf(0, 10, 0.9, 0.1).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn sarmanov_pmf_sums_to_one_at_the_edge() {
        let (n1, n2, pi1, pi2, g1, g2) = (6, 5, 0.7, 0.9, 0.2, 0.1);
        let data = vec![StudyRecord::new(3, n1, 4, n2).unwrap()];
        // push θ out until some outcome of the study becomes inadmissible
        let mut theta = 0.0;
        while loglik_sarmanov(&data, pi1, pi2, g1, g2, theta + 0.5).is_ok() {
            theta += 0.5;
            assert!(theta < 1e4);
        }
        let mut total = 0.0;
        for y1 in 0..=n1 {
            for y2 in 0..=n2 {
                let s = StudyRecord::new(y1, n1, y2, n2).unwrap();
                if let Ok(l) = loglik_sarmanov(&[s], pi1, pi2, g1, g2, theta) {
                    total += l.total.exp();
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn sarmanov_bounds() {
        let (lo, hi) = sarmanov_theta_bounds(0.5, 0.5);
        assert!((lo + 4.0).abs() < 1e-14 && (hi - 4.0).abs() < 1e-14);
    }

    #[test]
    fn permutation_of_studies() {
        let rule = gauss_legendre(15).unwrap();
        let data = vec![
            StudyRecord::new(3, 10, 8, 10).unwrap(),
            StudyRecord::new(20, 25, 60, 61).unwrap(),
            StudyRecord::new(0, 4, 3, 7).unwrap(),
        ];
        let model = ModelSpec::copula_mixed(
            MarginSpec::beta(0.7, 0.2).unwrap(),
            MarginSpec::beta(0.9, 0.1).unwrap(),
            CopulaSpec::new(Family::Frank, Rotation::R0, -3.0).unwrap(),
        );
        let a = loglik_copula_mixed(&data, &model, &rule).unwrap();
        let rev: Vec<_> = data.iter().rev().copied().collect();
        let b = loglik_copula_mixed(&rev, &model, &rule).unwrap();
        for i in 0..3 {
            assert_eq!(a.per_study[i], b.per_study[2 - i]);
        }
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn countermonotonic_single_sum() {
        let rule = gauss_legendre(30).unwrap();
        let (m1, m2) = (MarginSpec::normal(0.7, 1.0).unwrap(), MarginSpec::normal(0.9, 1.0).unwrap());
        let cm = loglik_copula_mixed(&study(), &ModelSpec::copula_mixed(m1, m2, CopulaSpec::countermonotonic()), &rule)
            .unwrap()
            .total;
        let near = loglik_copula_mixed(
            &study(),
            &ModelSpec::copula_mixed(m1, m2, CopulaKind::BVN.with_theta(-0.99999).unwrap()),
            &gauss_legendre(200).unwrap(),
        )
        .unwrap()
        .total;
        assert!((cm - near).abs() < 1e-3, "{cm} vs {near}");
    }

    #[test]
    fn swapped_model_matches_swapped_data() {
        let rule = gauss_legendre(120).unwrap();
        let data = vec![StudyRecord::new(3, 10, 8, 10).unwrap(), StudyRecord::new(20, 25, 60, 61).unwrap()];
        let model = ModelSpec::copula_mixed(
            MarginSpec::beta(0.7, 0.2).unwrap(),
            MarginSpec::beta(0.9, 0.1).unwrap(),
            CopulaKind::CLAYTON90.with_tau(-0.4).unwrap(),
        );
        let a = loglik_copula_mixed(&data, &model, &rule).unwrap().total;
        let sw: Vec<_> = data.iter().map(|s| s.swapped()).collect();
        let b = loglik_copula_mixed(&sw, &model.swapped(), &rule).unwrap().total;
        // the grids differ (conditioning on the other component), agreement is to quadrature error
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}
