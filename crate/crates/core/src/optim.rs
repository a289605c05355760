//! Quasi-Newton minimisation with numerical derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    /// Converged when the max-norm of the gradient drops below this.
    pub grad_tol: f64,
    /// Stop when a step moves no coordinate by more than this (relative).
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { grad_tol: 1e-5, step_tol: 1e-9, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    StepSize,
    LineSearch,
    MaxIterations,
    NonFiniteStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl BfgsResult {
    pub fn grad_norm(&self) -> f64 {
        max_abs(&self.grad)
    }

    /// The gradient test passed, or the iteration stalled with a gradient
    /// small enough that the remaining error is numerical noise.
    pub fn converged(&self, grad_tol: f64) -> bool {
        match self.termination {
            Termination::Gradient => true,
            Termination::StepSize | Termination::LineSearch => self.grad_norm() <= 100.0 * grad_tol,
            _ => false,
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Finite-difference step for coordinate value `x`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference gradient.
pub fn gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = fd_step(x[k]);
            xp[k] = x[k] + h;
            let fp = f(&xp);
            xp[k] = x[k] - h;
            let fm = f(&xp);
            xp[k] = x[k];
            if fp.is_finite() && fm.is_finite() {
                (fp - fm) / (2.0 * h)
            } else {
                // one-sided fallback next to the edge of the domain
                let f0 = f(x);
                if fp.is_finite() {
                    (fp - f0) / h
                } else if fm.is_finite() {
                    (f0 - fm) / h
                } else {
                    f64::NAN
                }
            }
        })
        .collect()
}

/// Central-difference Hessian with per-coordinate steps `h`.
pub fn hessian(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let f0 = f(x);
    let mut hm = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for i in 0..k {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        hm[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut eval = |di: f64, dj: f64| {
                xp[i] = x[i] + di * h[i];
                xp[j] = x[j] + dj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// Minimise `f` from `x0` by BFGS with backtracking line search. Non-finite
/// objective values are treated as infeasible points.
pub fn minimize(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut obj = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = obj(x.as_slice());
    if !fx.is_finite() {
        let g = vec![f64::NAN; n];
        return BfgsResult {
            x: x0.to_vec(),
            f: fx,
            grad: g,
            iterations: 0,
            evaluations: evals,
            termination: Termination::NonFiniteStart,
        };
    }
    let mut g = DVector::from_vec(gradient(&mut obj, x.as_slice()));
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut termination = Termination::MaxIterations;
    let mut iter = 0;
    while iter < opts.max_iter {
        if g.iter().all(|v| v.is_finite()) && max_abs(g.as_slice()) <= opts.grad_tol {
            termination = Termination::Gradient;
            break;
        }
        iter += 1;
        let mut d = -(&hinv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) || !d.iter().all(|v| v.is_finite()) {
            hinv = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
            fresh = true;
        }
        // keep the first step of a fresh approximation modest
        if fresh {
            let norm = max_abs(d.as_slice());
            if norm > 1.0 {
                d /= norm;
                slope /= norm;
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + alpha * &d;
            let fnew = obj(xn.as_slice());
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                termination = Termination::LineSearch;
                break;
            }
            hinv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let s = &xn - &x;
        let gn = DVector::from_vec(gradient(&mut obj, xn.as_slice()));
        let y = &gn - &g;
        let step_small = s.iter().zip(xn.iter()).all(|(si, xi)| si.abs() <= opts.step_tol * (1.0 + xi.abs()));
        x = xn;
        let df = fx - fnew;
        fx = fnew;
        g = gn;
        if step_small && df.abs() <= 1e-12 * (1.0 + fx.abs()) {
            termination = if max_abs(g.as_slice()) <= opts.grad_tol { Termination::Gradient } else { Termination::StepSize };
            break;
        }
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && g.iter().all(|v| v.is_finite()) {
            if fresh {
                // scale the initial approximation to the observed curvature
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += ((1.0 + rho * yhy) * rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }
    }
    if termination == Termination::MaxIterations && max_abs(g.as_slice()) <= opts.grad_tol {
        termination = Termination::Gradient;
    }
    BfgsResult {
        x: x.as_slice().to_vec(),
        f: fx,
        grad: g.as_slice().to_vec(),
        iterations: iter,
        evaluations: evals,
        termination,
    }
}
