//! Large-sample limits for a common group size `n`.
//!
//! With every study of size `n` in both groups, the data are counts over the
//! `(n + 1)²` outcomes `(y1, y2)`. As the number of studies grows, their
//! relative frequencies converge to the model probabilities, and any
//! estimator defined by maximising an average log-likelihood converges to the
//! maximiser of the probability-weighted log-likelihood. Means and dispersions
//! are shared by the two components.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaKind, CopulaSpec, Family};
use crate::error::{Error, Result};
use crate::estimation::{transforms, Transform, BOUNDARY_TAU};
use crate::likelihood::{Dependence, ModelSpec};
use crate::margins::{binomial_logpmf, MarginSpec, StudyRecord};
use crate::optim::{self, BfgsOptions};
use crate::quadrature::{dependent_nodes, QuadRule};

pub const MAX_GROUP_SIZE: u32 = 200;
/// Rule size used for outcome probabilities unless the caller chooses one.
pub const DEFAULT_TABLE_NQ: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub n: u32,
    pub true_model: ModelSpec,
    /// `(y1, y2)` with `y1` major.
    pub cases: Vec<(u32, u32)>,
    pub probs: Vec<f64>,
}

impl OutcomeTable {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

fn binomial_pmfs(n: u32, x: f64) -> Result<Vec<f64>> {
    (0..=n).map(|y| binomial_logpmf(y, n, x).map(f64::exp)).collect()
}

/// Probabilities of all `(y1, y2)` outcomes for group size `n` under a copula
/// mixed model, by the dependent-node double sum.
pub fn model_probabilities(n: u32, true_model: &ModelSpec, rule: &QuadRule) -> Result<OutcomeTable> {
    if n == 0 {
        return Err(Error::domain("group size must be positive"));
    }
    if n > MAX_GROUP_SIZE {
        return Err(Error::Size(format!("group size {n} exceeds the limit of {MAX_GROUP_SIZE}")));
    }
    let copula = match true_model.dependence {
        Dependence::Copula(c) => c,
        _ => return Err(Error::domain("outcome probabilities need a copula mixed model")),
    };
    let (m1, m2) = (&true_model.margin1, &true_model.margin2);
    let grid = dependent_nodes(rule, &copula)?;
    let nq = rule.len();
    let k = n as usize + 1;
    let mut probs = vec![0.0; k * k];
    let mut inner = vec![0.0; k];
    for q1 in 0..nq {
        let g1 = binomial_pmfs(n, m1.quantile(rule.nodes[q1])?)?;
        inner.iter_mut().for_each(|v| *v = 0.0);
        for q2 in 0..nq {
            let g2 = binomial_pmfs(n, m2.quantile(grid.v_at(q1, q2))?)?;
            let w = rule.weights[q2];
            for (a, b) in inner.iter_mut().zip(&g2) {
                *a += w * b;
            }
        }
        let w1 = rule.weights[q1];
        for y1 in 0..k {
            let f = w1 * g1[y1];
            for y2 in 0..k {
                probs[y1 * k + y2] += f * inner[y2];
            }
        }
    }
    let cases = (0..=n).flat_map(|a| (0..=n).map(move |b| (a, b))).collect();
    Ok(OutcomeTable { n, true_model: *true_model, cases, probs })
}

/// Common-parameter model with beta margins and a copula of `kind`.
pub fn common_model(kind: CopulaKind, pi: f64, gamma: f64, theta: f64) -> Result<ModelSpec> {
    let m = MarginSpec::beta(pi, gamma)?;
    Ok(ModelSpec::copula_mixed(m, m, kind.with_theta(theta)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingEstimate {
    pub pi: f64,
    pub gamma: f64,
    pub theta: f64,
    /// Maximised probability-weighted log-likelihood.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Dependence fixed at the Fréchet lower bound.
    pub boundary: bool,
    /// KHS only: outcomes whose CDF values hit the clamp.
    pub clamp_events: usize,
}

fn copula_of(table: &OutcomeTable) -> Result<CopulaSpec> {
    let m = &table.true_model;
    if m.margin1 != m.margin2 {
        return Err(Error::domain("limiting estimators need common margin parameters"));
    }
    m.copula().ok_or_else(|| Error::domain("limiting estimators need a copula model"))
}

/// Maximise `objective(π, γ, θ)` on the estimation transforms.
fn maximise(
    kind: CopulaKind,
    start: [f64; 3],
    free_theta: bool,
    mut objective: impl FnMut(f64, f64, f64) -> Option<f64>,
) -> Result<(f64, f64, f64, f64, bool, usize)> {
    let probe = common_model(kind, 0.5, 0.1, kind.independence().theta())?;
    let tr = transforms(&probe);
    let map: [Transform; 3] = [tr[0], tr[2], tr[4]];
    let k = if free_theta { 3 } else { 2 };
    let z0: Vec<f64> = (0..k).map(|i| map[i].forward(start[i])).collect();
    let opts = BfgsOptions::default();
    let unpack = |z: &[f64]| {
        let pi = map[0].inverse(z[0]);
        let gamma = map[1].inverse(z[1]);
        let theta = if free_theta { map[2].inverse(z[2]) } else { start[2] };
        (pi, gamma, theta)
    };
    let res = optim::minimize(
        |z| {
            let (p, g, t) = unpack(z);
            objective(p, g, t).map(|v| -v).unwrap_or(f64::INFINITY)
        },
        &z0,
        &opts,
    );
    let (p, g, t) = unpack(&res.x);
    Ok((p, g, t, -res.f, res.converged(opts.grad_tol), res.iterations))
}

/// Limit in probability of the KHS estimator: maximiser over common
/// `(π, γ, θ)` of the `p`-weighted KHS log-likelihood, using the copula family
/// of the table's model.
pub fn limiting_khs(table: &OutcomeTable) -> Result<LimitingEstimate> {
    let copula = copula_of(table)?;
    let n = table.n;
    let kind = copula.kind();
    let cases: Vec<(StudyRecord, f64)> = table
        .cases
        .iter()
        .zip(&table.probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&(y1, y2), &p)| Ok((StudyRecord::new(y1, n, y2, n)?, p)))
        .collect::<Result<_>>()?;
    let data: Vec<StudyRecord> = cases.iter().map(|c| c.0).collect();
    let mut clamps = 0;
    let eval = |pi: f64, gamma: f64, theta: f64, clamps: &mut usize| -> Option<f64> {
        let m = MarginSpec::beta(pi, gamma).ok()?;
        let model = ModelSpec::khs(m, m, kind.with_theta(theta).ok()?).ok()?;
        let ll = crate::likelihood::loglik_khs(&data, &model).ok()?;
        *clamps = ll.clamp_events;
        let v: f64 = ll.per_study.iter().zip(&cases).map(|(l, c)| c.1 * l).sum();
        v.is_finite().then_some(v)
    };
    let m = &table.true_model.margin1;
    let start_theta = kind.with_tau(0.5 * copula.tau().value().clamp(-0.9, 0.9)).map(|c| c.theta()).unwrap_or(0.0);
    let (pi, gamma, theta, objective, converged, iterations) =
        maximise(kind, [m.pi, m.scale, start_theta], true, |p, g, t| eval(p, g, t, &mut clamps))?;
    eval(pi, gamma, theta, &mut clamps);
    Ok(LimitingEstimate { pi, gamma, theta, objective, converged, iterations, boundary: false, clamp_events: clamps })
}

/// Limit in probability of the maximum-likelihood estimator: maximiser of
/// `Σ p log f(y; π, γ, θ)` with `f` from [`model_probabilities`] on `rule`.
pub fn limiting_mle(table: &OutcomeTable, rule: &QuadRule) -> Result<LimitingEstimate> {
    let copula = copula_of(table)?;
    let kind = copula.kind();
    let n = table.n;
    let objective = |pi: f64, gamma: f64, spec: CopulaSpec| -> Option<f64> {
        let m = MarginSpec::beta(pi, gamma).ok()?;
        let t = model_probabilities(n, &ModelSpec::copula_mixed(m, m, spec), rule).ok()?;
        let v: f64 = table
            .probs
            .iter()
            .zip(&t.probs)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &f)| if f > 0.0 { p * f.ln() } else { f64::NEG_INFINITY })
            .sum();
        v.is_finite().then_some(v)
    };
    let m = &table.true_model.margin1;
    // start away from the truth so the check is not trivial
    let start_theta = kind.with_tau(0.5 * copula.tau().value().clamp(-0.9, 0.9)).map(|c| c.theta()).unwrap_or(0.0);
    let start = [(m.pi + 0.5) / 2.0, m.scale * 1.5, start_theta];
    let (pi, gamma, theta, obj, converged, iterations) =
        maximise(kind, start, true, |p, g, t| objective(p, g, kind.with_theta(t).ok()?))?;
    let interior = LimitingEstimate { pi, gamma, theta, objective: obj, converged, iterations, boundary: false, clamp_events: 0 };
    let tau = kind.with_theta(theta).map(|c| c.tau().value()).unwrap_or(0.0);
    if kind.family == Family::Bvn && tau < -BOUNDARY_TAU {
        let (pi, gamma, _, bobj, bconv, bit) =
            maximise(kind, [pi, gamma, -1.0], false, |p, g, _| objective(p, g, CopulaSpec::countermonotonic()))?;
        if bconv && bobj >= obj {
            return Ok(LimitingEstimate {
                pi,
                gamma,
                theta: -1.0,
                objective: bobj,
                converged: true,
                iterations: bit,
                boundary: true,
                clamp_events: 0,
            });
        }
    }
    Ok(interior)
}

/// One line of the limiting-KHS table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableA1Row {
    pub rho_true: f64,
    pub n: u32,
    pub rho_khs: f64,
    pub pi_true: f64,
    pub pi_khs: f64,
    pub gamma_true: f64,
    pub gamma_khs: f64,
    pub converged: bool,
    /// Deviation of the outcome probabilities' sum from one.
    pub mass_error: f64,
}

/// Limiting KHS estimates for a BVN copula mixed model with common beta
/// margins.
pub fn table_a1_row(rho: f64, pi: f64, gamma: f64, n: u32, rule: &QuadRule) -> Result<TableA1Row> {
    let model = common_model(CopulaKind::BVN, pi, gamma, rho)?;
    let table = model_probabilities(n, &model, rule)?;
    let k = limiting_khs(&table)?;
    Ok(TableA1Row {
        rho_true: rho,
        n,
        rho_khs: k.theta,
        pi_true: pi,
        pi_khs: k.pi,
        gamma_true: gamma,
        gamma_khs: k.gamma,
        converged: k.converged,
        mass_error: table.total() - 1.0,
    })
}

pub fn write_table_a1<W: Write>(rows: &[TableA1Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["rho_true", "n", "rho_khs", "pi_true", "pi_khs", "gamma_true", "gamma_khs"]).map_err(io)?;
    for r in rows {
        out.write_record([
            format!("{}", r.rho_true),
            r.n.to_string(),
            format!("{:.6}", r.rho_khs),
            format!("{}", r.pi_true),
            format!("{:.6}", r.pi_khs),
            format!("{}", r.gamma_true),
            format!("{:.6}", r.gamma_khs),
        ])
        .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}
