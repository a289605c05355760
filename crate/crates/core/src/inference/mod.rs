//! SROC curves, summary operating point, predictive region and Vuong's test.
//!
//! Curves are returned in ROC orientation: `(1 - specificity, sensitivity)`.

mod contour;
mod vuong;

pub use contour::{loop_area, loop_contains, predictive_contours, Contour, DEFAULT_RESOLUTION};
pub use vuong::{vuong_test, VuongResult};

use serde::{Deserialize, Serialize};

use crate::copulas::Family;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::likelihood::ModelSpec;
use crate::margins::{latent_probability, MarginKind};
use crate::special::{expit, logit};

pub const DEFAULT_QUANTILES: [f64; 3] = [0.01, 0.5, 0.99];

/// 200 equally spaced values in `[0.005, 0.995]`.
pub fn default_grid() -> Vec<f64> {
    linspace(0.005, 0.995, 200)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Sensitivity as a function of specificity.
    X1OnX2,
    /// Specificity as a function of sensitivity.
    X2OnX1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub q: f64,
    /// `(fpr, sens)` ordered by the conditioning variable.
    pub points: Vec<(f64, f64)>,
    /// The copula is at the Fréchet bound and the curve does not depend on q.
    pub deterministic: bool,
}

fn open(u: f64) -> f64 {
    u.clamp(1e-15, 1.0 - 1e-15)
}

/// Quantile regression curve at level `q` of `model`, over `grid` values of
/// the conditioning variable (specificity for [`Direction::X1OnX2`]).
pub fn quantile_curve_in(model: &ModelSpec, q: f64, grid: &[f64], direction: Direction) -> Result<QuantileCurve> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let copula = model.copula().ok_or_else(|| Error::domain("quantile curves need a copula model"))?;
    let mut grid = grid.to_vec();
    if grid.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
        return Err(Error::domain("curve grid values must lie in (0, 1)"));
    }
    grid.sort_by(f64::total_cmp);
    let (m1, m2) = (&model.margin1, &model.margin2);
    let points = grid
        .iter()
        .map(|&x| match direction {
            Direction::X1OnX2 => {
                // C(u1 | u2) = q, conditioning on the second argument
                let u2 = open(m2.cdf(x));
                let u1 = open(copula.transposed().inv_cond_cdf(q, u2)?);
                Ok((1.0 - x, latent_probability(u1, m1)?))
            }
            Direction::X2OnX1 => {
                let u1 = open(m1.cdf(x));
                let u2 = open(copula.inv_cond_cdf(q, u1)?);
                Ok((1.0 - latent_probability(u2, m2)?, x))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileCurve { q, points, deterministic: copula.is_countermonotonic() || copula.is_comonotonic() })
}

/// Sensitivity on specificity quantile curve.
pub fn quantile_curve(model: &ModelSpec, q: f64, grid: &[f64]) -> Result<QuantileCurve> {
    quantile_curve_in(model, q, grid, Direction::X1OnX2)
}

/// The GLMM SROC line: conditional mean of logit sensitivity given
/// specificity, mapped back through the inverse logit.
pub fn glmm_sroc(model: &ModelSpec, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let copula = model.copula().filter(|c| c.family() == Family::Bvn && model.variant() == crate::likelihood::Variant::CopulaMixed);
    let Some(copula) = copula else {
        return Err(Error::domain("the GLMM SROC line needs the BVN copula"));
    };
    if model.margin_kind() != MarginKind::NormalLogit {
        return Err(Error::domain("the GLMM SROC line needs normal margins on the logit scale"));
    }
    let (m1, m2) = (&model.margin1, &model.margin2);
    if !(m2.scale > 0.0) {
        return Err(Error::domain("sigma2 must be positive"));
    }
    let slope = copula.theta() * m1.scale / m2.scale;
    let intercept = logit(m1.pi) - slope * logit(m2.pi);
    grid.iter()
        .map(|&x| {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::domain("curve grid values must lie in (0, 1)"));
            }
            Ok((1.0 - x, expit(intercept + slope * logit(x))))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRegion {
    pub sensitivity: f64,
    pub specificity: f64,
    pub coverage: f64,
    /// Closed `(fpr, sens)` loop; absent when standard errors are missing.
    pub region: Option<Vec<(f64, f64)>>,
    pub notes: Vec<String>,
}

/// Summary operating point `(π̂1, π̂2)` with a Wald confidence ellipse from
/// the `(π1, π2)` block of the estimated covariance.
pub fn summary_point_region(fit: &FitResult, coverage: f64) -> Result<SummaryRegion> {
    if !(0.0..1.0).contains(&coverage) {
        return Err(Error::domain(format!("coverage must lie in [0, 1), got {coverage}")));
    }
    let (p1, p2) = (fit.estimates[0], fit.estimates[1]);
    let mut out = SummaryRegion { sensitivity: p1, specificity: p2, coverage, region: None, notes: vec![] };
    let block = fit.se.as_ref().and_then(|se| Some((se.cov(0, 0)?, se.cov(0, 1)?, se.cov(1, 1)?)));
    let Some((a, b, c)) = block else {
        out.notes.push("standard errors unavailable; confidence region omitted".into());
        return Ok(out);
    };
    // chi-square quantile with two degrees of freedom
    let r = (-2.0 * (-coverage).ln_1p()).sqrt();
    let l11 = a.sqrt();
    let l21 = b / l11;
    let l22 = (c - l21 * l21).max(0.0).sqrt();
    let n = 120;
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let (z1, z2) = (r * t.cos(), r * t.sin());
            let s1 = (p1 + l11 * z1).clamp(0.0, 1.0);
            let s2 = (p2 + l21 * z1 + l22 * z2).clamp(0.0, 1.0);
            (1.0 - s2, s1)
        })
        .collect();
    pts.push(pts[0]);
    out.region = Some(pts);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub direction: Direction,
    pub quantile_curves: Vec<QuantileCurve>,
    pub summary_point: (f64, f64),
    pub confidence_region: Option<Vec<(f64, f64)>>,
    pub predictive_contours: Vec<Contour>,
    pub notes: Vec<String>,
}

/// Everything needed to draw an SROC plot for a fit.
pub fn curve_set(
    fit: &FitResult,
    quantiles: &[f64],
    grid: &[f64],
    levels: &[f64],
    coverage: f64,
    resolution: usize,
) -> Result<CurveSet> {
    let mut notes = Vec::new();
    let model = &fit.model;
    let deterministic = model.copula().is_some_and(|c| c.is_countermonotonic() || c.is_comonotonic());
    let quantile_curves = if deterministic {
        notes.push("countermonotonic fit: all quantile curves coincide; a single curve is reported".into());
        vec![quantile_curve(model, 0.5, grid)?]
    } else {
        quantiles.iter().map(|&q| quantile_curve(model, q, grid)).collect::<Result<_>>()?
    };
    let summary = summary_point_region(fit, coverage)?;
    notes.extend(summary.notes.iter().cloned());
    let predictive_contours = if deterministic {
        notes.push("no predictive region at the countermonotonic boundary".into());
        vec![]
    } else {
        predictive_contours(model, levels, resolution)?
    };
    Ok(CurveSet {
        direction: Direction::X1OnX2,
        quantile_curves,
        summary_point: (1.0 - summary.specificity, summary.sensitivity),
        confidence_region: summary.region,
        predictive_contours,
        notes,
    })
}
