//! Maximum-likelihood fitting.
//!
//! Parameters are optimised on an unconstrained scale (logit for means and
//! beta dispersions, log for normal scales, Fisher z for the normal copula,
//! log for Clayton, identity for Frank, and a logistic map onto the
//! admissible interval for Sarmanov). Standard errors come from a
//! central-difference Hessian on the original scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaSpec, Family, Tau};
use crate::error::{Error, Result};
use crate::likelihood::{sarmanov_admissible_range, Dependence, LogLikResult, ModelSpec, Variant};
use crate::margins::{MarginKind, MarginSpec, StudyRecord};
use crate::numeric::kendall_tau;
use crate::optim::{self, BfgsOptions, Termination};
use crate::quadrature::{gauss_legendre, QuadRule, DEFAULT_NQ};
use crate::special::{expit, logit};

/// Estimates beyond this |τ| trigger the countermonotonic refit.
pub const BOUNDARY_TAU: f64 = 0.97;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Optimise unconstrained transforms of the parameters.
    Transformed,
    /// Optimise the original parameters, clamped into their domain.
    ClampedOriginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub nq: usize,
    pub bfgs: BfgsOptions,
    pub parameterization: Parameterization,
    pub boundary_refit: bool,
    pub standard_errors: bool,
    /// Starting values `(π1, π2, scale1, scale2, θ)`; data-driven if absent.
    pub start: Option<[f64; 5]>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            nq: DEFAULT_NQ,
            bfgs: BfgsOptions::default(),
            parameterization: Parameterization::Transformed,
            boundary_refit: true,
            standard_errors: true,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    /// Per estimate; `None` for parameters held fixed.
    pub params: [Option<f64>; 5],
    pub tau: Option<f64>,
    /// Indices of the free parameters, the order of `covariance`.
    pub free: Vec<usize>,
    pub covariance: Vec<Vec<f64>>,
}

impl StandardErrors {
    /// Covariance between estimates `i` and `j`, if both were free.
    pub fn cov(&self, i: usize, j: usize) -> Option<f64> {
        let a = self.free.iter().position(|&k| k == i)?;
        let b = self.free.iter().position(|&k| k == j)?;
        Some(self.covariance[a][b])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    /// `(π1, π2, scale1, scale2, θ)`.
    pub estimates: [f64; 5],
    pub tau_hat: Tau,
    pub se: Option<StandardErrors>,
    pub loglik: LogLikResult,
    pub converged: bool,
    /// The countermonotonic refit was applied.
    pub boundary: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Max-norm of the gradient at the optimum, optimisation scale.
    pub grad_norm: f64,
    pub start: [f64; 5],
    pub start_loglik: f64,
    pub nq: usize,
    pub diagnostics: Vec<String>,
    /// The other fit when a boundary refit was attempted.
    pub alternative: Option<Box<FitResult>>,
}

impl FitResult {
    /// Number of estimated parameters.
    pub fn n_free(&self) -> usize {
        if self.boundary || self.model.copula().is_some_and(|c| c.is_countermonotonic()) {
            4
        } else {
            5
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Transform {
    Logit,
    Log,
    Atanh,
    Identity,
}

impl Transform {
    pub(crate) fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Logit => logit(x),
            Transform::Log => x.ln(),
            Transform::Atanh => x.atanh(),
            Transform::Identity => x,
        }
    }

    pub(crate) fn inverse(self, z: f64) -> f64 {
        match self {
            Transform::Logit => expit(z),
            Transform::Log => z.exp(),
            Transform::Atanh => z.tanh(),
            Transform::Identity => z,
        }
    }
}

pub(crate) fn transforms(model: &ModelSpec) -> [Transform; 5] {
    let scale = match model.margin_kind() {
        MarginKind::NormalLogit => Transform::Log,
        MarginKind::Beta => Transform::Logit,
    };
    let dep = match model.dependence {
        Dependence::Copula(c) | Dependence::Khs(c) => match c.family() {
            Family::Bvn => Transform::Atanh,
            Family::Frank => Transform::Identity,
            Family::Clayton => Transform::Log,
        },
        Dependence::Sarmanov(_) => Transform::Identity,
    };
    [Transform::Logit, Transform::Logit, scale, scale, dep]
}

/// Box used by the clamped-original parameterisation.
fn bounds(model: &ModelSpec) -> [(f64, f64); 5] {
    let p = (1e-8, 1.0 - 1e-8);
    let scale = match model.margin_kind() {
        MarginKind::NormalLogit => (1e-6, 50.0),
        MarginKind::Beta => p,
    };
    let dep = match model.dependence {
        Dependence::Copula(c) | Dependence::Khs(c) => match c.family() {
            Family::Bvn => (-1.0 + 1e-10, 1.0 - 1e-10),
            Family::Frank => (-100.0, 100.0),
            Family::Clayton => (0.0, crate::copulas::CLAYTON_MAX_THETA),
        },
        Dependence::Sarmanov(_) => (-1e6, 1e6),
    };
    [p, p, scale, scale, dep]
}

fn eval(data: &[StudyRecord], model: &ModelSpec, p: &[f64; 5], rule: &QuadRule) -> Result<LogLikResult> {
    model.with_params(p)?.loglik(data, rule)
}

fn neg_loglik(data: &[StudyRecord], model: &ModelSpec, p: &[f64; 5], rule: &QuadRule) -> f64 {
    match eval(data, model, p, rule) {
        Ok(l) if l.total.is_finite() => -l.total,
        _ => f64::INFINITY,
    }
}

/// Data-driven starting values for `template`.
pub fn starting_values(data: &[StudyRecord], template: &ModelSpec) -> [f64; 5] {
    let pooled = |y: u64, n: u64| (y as f64 / n.max(1) as f64).clamp(0.01, 0.99);
    let pi1 = pooled(data.iter().map(|s| s.y1 as u64).sum(), data.iter().map(|s| s.n1 as u64).sum());
    let pi2 = pooled(data.iter().map(|s| s.y2 as u64).sum(), data.iter().map(|s| s.n2 as u64).sum());
    let scale = match template.margin_kind() {
        MarginKind::NormalLogit => 1.0,
        MarginKind::Beta => 0.1,
    };
    let l1: Vec<f64> = data.iter().map(|s| logit((s.y1 as f64 + 0.5) / (s.n1 as f64 + 1.0))).collect();
    let l2: Vec<f64> = data.iter().map(|s| logit((s.y2 as f64 + 0.5) / (s.n2 as f64 + 1.0))).collect();
    let tau = if data.len() >= 2 { kendall_tau(&l1, &l2) } else { 0.0 };
    let theta = match template.dependence {
        Dependence::Copula(c) | Dependence::Khs(c) => {
            let sign = c.kind().tau_sign();
            let t = if sign != 0.0 { sign * (sign * tau).max(0.05) } else { tau };
            c.kind().with_tau(t.clamp(-0.8, 0.8)).map(|s| s.theta()).unwrap_or(0.0)
        }
        Dependence::Sarmanov(_) => 0.0,
    };
    [pi1, pi2, scale, scale, theta]
}

struct Problem<'a> {
    data: &'a [StudyRecord],
    template: ModelSpec,
    rule: QuadRule,
    free: Vec<usize>,
    fixed: [f64; 5],
    transforms: [Transform; 5],
    bounds: [(f64, f64); 5],
    parameterization: Parameterization,
}

impl Problem<'_> {
    /// Sarmanov θ is mapped onto its admissible interval, which moves with
    /// the margin parameters.
    fn sarmanov_interval(&self, p: &[f64; 5]) -> Option<(f64, f64)> {
        if self.parameterization != Parameterization::Transformed || !self.free.contains(&4) {
            return None;
        }
        let Dependence::Sarmanov(_) = self.template.dependence else { return None };
        let (lo, hi) = sarmanov_admissible_range(self.data, p[0], p[1], p[2], p[3]);
        let shrink = 1.0 - 1e-9;
        Some((lo * shrink, hi * shrink))
    }

    fn to_params(&self, z: &[f64]) -> ([f64; 5], f64) {
        let mut p = self.fixed;
        let mut penalty = 0.0;
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = match self.parameterization {
                Parameterization::Transformed if i == 4 => match self.sarmanov_interval(&p) {
                    Some((lo, hi)) => lo + (hi - lo) * expit(z[k]),
                    None => self.transforms[i].inverse(z[k]),
                },
                Parameterization::Transformed => self.transforms[i].inverse(z[k]),
                Parameterization::ClampedOriginal => {
                    let (lo, hi) = self.bounds[i];
                    let c = z[k].clamp(lo, hi);
                    penalty += 1e3 * (z[k] - c).powi(2);
                    c
                }
            };
        }
        (p, penalty)
    }

    fn to_z(&self, p: &[f64; 5]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| match self.parameterization {
                Parameterization::Transformed if i == 4 => match self.sarmanov_interval(p) {
                    Some((lo, hi)) => logit(((p[i] - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9)),
                    None => self.transforms[i].forward(p[i]),
                },
                Parameterization::Transformed => self.transforms[i].forward(p[i]),
                Parameterization::ClampedOriginal => p[i],
            })
            .collect()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let (p, penalty) = self.to_params(z);
        neg_loglik(self.data, &self.template, &p, &self.rule) + penalty
    }
}

fn check_input(data: &[StudyRecord], min: usize) -> Result<()> {
    if data.len() < min {
        return Err(Error::Validation { line: None, msg: format!("at least {min} studies are required, got {}", data.len()) });
    }
    Ok(())
}

/// Maximum-likelihood fit of the structure in `template`. The parameter
/// values in `template` are ignored unless `options.start` is unset and the
/// data-driven start cannot be evaluated.
pub fn fit(data: &[StudyRecord], template: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    check_input(data, 2)?;
    let mut result = optimise(data, template, &[0, 1, 2, 3, 4], options)?;
    if data.len() < 5 {
        result.diagnostics.push(format!("only {} studies; estimates are unstable below 5", data.len()));
    }
    let tau = result.tau_hat.value();
    let hessian_failed = result.converged && options.standard_errors && result.se.is_none();
    let near = tau < -BOUNDARY_TAU || (hessian_failed && tau < -0.9);
    if near && template.variant() == Variant::CopulaMixed && options.boundary_refit {
        result.diagnostics.push(format!("tau estimate {tau:.6} is at the lower boundary; countermonotonic refit"));
        let mut refit = fit_countermonotonic(data, &template.margin1, &template.margin2, options)?;
        if !refit.converged {
            refit.diagnostics.push("countermonotonic refit did not converge".into());
            result.alternative = Some(Box::new(refit));
        } else {
            refit.boundary = true;
            refit.diagnostics.extend(result.diagnostics.iter().cloned());
            refit.alternative = Some(Box::new(result));
            return Ok(refit);
        }
    } else if let Dependence::Sarmanov(theta) = result.model.dependence {
        let p = result.estimates;
        let (lo, hi) = sarmanov_admissible_range(data, p[0], p[1], p[2], p[3]);
        if (theta - lo).min(hi - theta) < 1e-6 * (hi - lo) {
            result.diagnostics.push(format!("Sarmanov parameter {theta:.6} is at the edge of its admissible range [{lo:.6}, {hi:.6}]"));
        }
    } else if tau.abs() > BOUNDARY_TAU {
        result.diagnostics.push(format!("tau estimate {tau:.6} is at the boundary of the parameter space"));
    }
    Ok(result)
}

/// Fit with the copula fixed at the Fréchet lower bound `v = 1 - u`,
/// estimating the four margin parameters only.
pub fn fit_countermonotonic(
    data: &[StudyRecord],
    margin1: &MarginSpec,
    margin2: &MarginSpec,
    options: &FitOptions,
) -> Result<FitResult> {
    check_input(data, 1)?;
    if margin1.kind != margin2.kind {
        return Err(Error::domain("both margins must be of the same kind"));
    }
    let template = ModelSpec::copula_mixed(*margin1, *margin2, CopulaSpec::countermonotonic());
    let mut r = optimise(data, &template, &[0, 1, 2, 3], options)?;
    if let Some(se) = r.se.as_mut() {
        se.tau = None;
    }
    r.diagnostics.push("tau fixed at -1 (countermonotonic); no standard error for tau".into());
    Ok(r)
}

fn optimise(data: &[StudyRecord], template: &ModelSpec, free: &[usize], options: &FitOptions) -> Result<FitResult> {
    let rule = gauss_legendre(options.nq)?;
    let mut start = options.start.unwrap_or_else(|| starting_values(data, template));
    if free.len() < 5 {
        start[4] = template.theta();
    }
    let mut diagnostics = Vec::new();
    let start_ll = match eval(data, template, &start, &rule) {
        Ok(l) if l.total.is_finite() => l.total,
        first => {
            // fall back to the template's own parameters
            let alt = template.params();
            match eval(data, template, &alt, &rule) {
                Ok(l) if l.total.is_finite() => {
                    diagnostics.push(format!("default start {start:?} not evaluable; using template parameters"));
                    start = alt;
                    l.total
                }
                _ => {
                    let e = match first {
                        Err(e) => e.to_string(),
                        Ok(l) => format!("log-likelihood {}", l.total),
                    };
                    return Err(Error::Evaluation {
                        study: 0,
                        reason: format!("{template} at start {start:?}: {e}"),
                    });
                }
            }
        }
    };

    let problem = Problem {
        data,
        template: *template,
        rule,
        free: free.to_vec(),
        fixed: start,
        transforms: transforms(template),
        bounds: bounds(template),
        parameterization: options.parameterization,
    };
    let z0 = problem.to_z(&start);
    let res = optim::minimize(|z| problem.objective(z), &z0, &options.bfgs);
    let (p, _) = problem.to_params(&res.x);
    let model = template.with_params(&p)?;
    let loglik = model.loglik(data, &problem.rule)?;
    let converged = res.converged(options.bfgs.grad_tol);
    if !converged {
        diagnostics.push(format!(
            "optimiser stopped ({:?}) after {} iterations with gradient norm {:.3e}",
            res.termination,
            res.iterations,
            res.grad_norm()
        ));
    }
    let tau_hat = Tau::new(model.tau().clamp(-1.0, 1.0))?;

    let se = if options.standard_errors && converged {
        match standard_errors(data, &model, free, &problem.rule) {
            Ok(se) => Some(se),
            Err(e) => {
                diagnostics.push(format!("standard errors omitted: {e}"));
                None
            }
        }
    } else {
        None
    };

    Ok(FitResult {
        model,
        estimates: p,
        tau_hat,
        se,
        loglik,
        converged,
        boundary: false,
        iterations: res.iterations,
        evaluations: res.evaluations,
        termination: res.termination,
        grad_norm: res.grad_norm(),
        start,
        start_loglik: start_ll,
        nq: problem.rule.len(),
        diagnostics,
        alternative: None,
    })
}

/// Largest step that keeps `x ± 2h` inside the domain of parameter `i`.
fn hessian_step(data: &[StudyRecord], model: &ModelSpec, i: usize, x: f64) -> f64 {
    let h = f64::EPSILON.powf(0.25) * x.abs().max(0.01);
    let room = match i {
        0 | 1 => x.min(1.0 - x),
        2 | 3 => match model.margin_kind() {
            MarginKind::NormalLogit => x,
            MarginKind::Beta => x.min(1.0 - x),
        },
        _ => match model.dependence {
            Dependence::Copula(c) | Dependence::Khs(c) => match c.family() {
                Family::Bvn => 1.0 - x.abs(),
                Family::Frank => f64::INFINITY,
                Family::Clayton => x,
            },
            Dependence::Sarmanov(_) => {
                let p = model.params();
                let (lo, hi) = sarmanov_admissible_range(data, p[0], p[1], p[2], p[3]);
                (x - lo).min(hi - x)
            }
        },
    };
    h.min(0.25 * room)
}

/// Standard errors from the observed information of the log-likelihood in the
/// original parameters `free` of `model`.
pub fn standard_errors(data: &[StudyRecord], model: &ModelSpec, free: &[usize], rule: &QuadRule) -> Result<StandardErrors> {
    let p0 = model.params();
    let x: Vec<f64> = free.iter().map(|&i| p0[i]).collect();
    let steps: Vec<f64> = free.iter().zip(&x).map(|(&i, &xi)| hessian_step(data, model, i, xi)).collect();
    if steps.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Degenerate("estimate on the edge of the parameter space".into()));
    }
    let loglik = |z: &[f64]| {
        let mut p = p0;
        for (k, &i) in free.iter().enumerate() {
            p[i] = z[k];
        }
        -neg_loglik(data, model, &p, rule)
    };
    let covariance = covariance_from_loglik(loglik, &x, &steps)?;
    let mut params = [None; 5];
    for (k, &i) in free.iter().enumerate() {
        params[i] = Some(covariance[(k, k)].sqrt());
    }

    // delta method for tau
    let tau = if free.contains(&4) {
        let mut g = vec![0.0; free.len()];
        let mut ok = true;
        for (k, &i) in free.iter().enumerate() {
            let h = steps[k];
            let shifted = |d: f64| {
                let mut p = p0;
                p[i] += d;
                model.with_params(&p).map(|m| m.tau())
            };
            match (shifted(h), shifted(-h)) {
                (Ok(a), Ok(b)) => g[k] = (a - b) / (2.0 * h),
                _ => ok = false,
            }
        }
        let gv = nalgebra::DVector::from_vec(g);
        let var = (gv.transpose() * &covariance * &gv)[(0, 0)];
        (ok && var >= 0.0).then(|| var.sqrt())
    } else {
        None
    };

    let k = free.len();
    Ok(StandardErrors {
        params,
        tau,
        free: free.to_vec(),
        covariance: (0..k).map(|a| (0..k).map(|b| covariance[(a, b)]).collect()).collect(),
    })
}

/// Inverse observed information `(-∇² loglik)⁻¹` at `x`.
pub fn covariance_from_loglik(mut loglik: impl FnMut(&[f64]) -> f64, x: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
    let h = optim::hessian(&mut loglik, x, steps);
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("Hessian has non-finite entries near the boundary".into()));
    }
    let info = -h;
    let chol = info
        .cholesky()
        .ok_or_else(|| Error::Degenerate("observed information is not positive definite (flat or boundary likelihood)".into()))?;
    Ok(chol.inverse())
}
