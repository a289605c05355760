//! Gauss-Legendre rules on the unit interval and the dependent node grid used
//! by every likelihood evaluation.

use serde::Serialize;

use crate::copulas::CopulaSpec;
use crate::error::{Error, Result};

/// Number of nodes used unless the caller asks otherwise.
pub const DEFAULT_NQ: usize = 15;
pub const MAX_NQ: usize = 200;

/// Gauss-Legendre rule on (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫₀¹ f(x) dx` under the rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1], in
/// increasing node order.
pub(crate) fn legendre_symmetric(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi's initial approximation of the i-th largest root.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = wi;
        w[i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule with `nq` nodes mapped to (0, 1).
pub fn gauss_legendre(nq: usize) -> Result<QuadRule> {
    if nq == 0 || nq > MAX_NQ {
        return Err(Error::domain(format!("quadrature size must be in 1..={MAX_NQ}, got {nq}")));
    }
    if nq == 1 {
        return Ok(QuadRule { nodes: vec![0.5], weights: vec![1.0] });
    }
    let (x, w) = legendre_symmetric(nq);
    Ok(QuadRule {
        nodes: x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
    })
}

/// Product grid `(u_{q1}, v_{q1,q2})` with `v = C⁻¹(u_{q2} | u_{q1})`, so that
/// the pairs carry the dependence of the copula.
#[derive(Debug, Clone)]
pub struct DependentGrid {
    pub nq: usize,
    /// First coordinate per outer index `q1`.
    pub u: Vec<f64>,
    /// Row-major `nq × nq`: `v[q1 * nq + q2]`.
    pub v: Vec<f64>,
    /// Product weights `w_{q1} w_{q2}`, same layout as `v`.
    pub weights: Vec<f64>,
}

impl DependentGrid {
    #[inline]
    pub fn v_at(&self, q1: usize, q2: usize) -> f64 {
        self.v[q1 * self.nq + q2]
    }
}

pub fn dependent_nodes(rule: &QuadRule, spec: &CopulaSpec) -> Result<DependentGrid> {
    let nq = rule.len();
    let mut v = Vec::with_capacity(nq * nq);
    let mut weights = Vec::with_capacity(nq * nq);
    for (&u1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        for (&u2, &w2) in rule.nodes.iter().zip(&rule.weights) {
            v.push(spec.inv_cond_cdf(u2, u1)?);
            weights.push(w1 * w2);
        }
    }
    Ok(DependentGrid { nq, u: rule.nodes.clone(), v, weights })
}
