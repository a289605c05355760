//! Bivariate copula families used for the random-effects distribution.
//!
//! Three families are supported: the bivariate normal (BVN), Frank, and Clayton
//! together with its 90°, 180° and 270° rotations. With `c` the density of the
//! unrotated Clayton copula, the rotated densities are
//!
//! | rotation | density            | dependence |
//! |----------|--------------------|------------|
//! | 0°       | `c(u1, u2)`        | positive, lower tail  |
//! | 90°      | `c(1 - u1, u2)`    | negative   |
//! | 180°     | `c(1 - u1, 1 - u2)`| positive, upper tail  |
//! | 270°     | `c(u1, 1 - u2)`    | negative   |
//!
//! Conditional distributions always condition on the *first* argument:
//! `cond_cdf(v | u) = ∂C(u, v)/∂u`. Use [`CopulaSpec::transposed`] to
//! condition on the second one.
//!
//! The BVN copula at `θ = -1` is the countermonotonic copula (Fréchet lower
//! bound); it has no density but its distribution and conditional functions are
//! available and are used for boundary fits.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::bvn::bvn_cdf;
use crate::error::{Error, Result};
use crate::numeric::brent;
use crate::quadrature::legendre_symmetric;
use crate::special::{log_add_exp, norm_cdf, norm_quantile, softplus};

/// Frank parameters below this magnitude are evaluated as independence.
pub const FRANK_INDEPENDENCE_EPS: f64 = 1e-5;
/// Clayton parameters below this value are evaluated as independence.
pub const CLAYTON_INDEPENDENCE_EPS: f64 = 1e-12;
/// Largest admissible Clayton parameter (τ ≈ 0.9998).
pub const CLAYTON_MAX_THETA: f64 = 1e4;
/// Bracket for inverting Kendall's tau of the Frank copula.
pub const FRANK_TAU_BRACKET: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bvn,
    Frank,
    Clayton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn from_degrees(deg: u16) -> Result<Self> {
        match deg {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            _ => Err(Error::domain(format!("rotation must be 0, 90, 180 or 270, got {deg}"))),
        }
    }

    /// Rotations that turn positive dependence into negative dependence.
    pub fn is_negative(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R270)
    }
}

/// Kendall's tau, `|τ| ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Tau(f64);

impl Tau {
    pub fn new(value: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::domain(format!("Kendall's tau must lie in [-1, 1], got {value}")));
        }
        Ok(Tau(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A parametric copula: family, rotation and dependence parameter θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    family: Family,
    rotation: Rotation,
    theta: f64,
}

impl fmt::Display for CopulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Bvn => write!(f, "bvn"),
            Family::Frank => write!(f, "frank"),
            Family::Clayton => write!(f, "clayton{}", self.rotation.degrees()),
        }
    }
}

/// A copula family together with its rotation, without a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CopulaKind {
    pub family: Family,
    pub rotation: Rotation,
}

impl CopulaKind {
    pub const BVN: CopulaKind = CopulaKind { family: Family::Bvn, rotation: Rotation::R0 };
    pub const FRANK: CopulaKind = CopulaKind { family: Family::Frank, rotation: Rotation::R0 };
    pub const CLAYTON0: CopulaKind = CopulaKind { family: Family::Clayton, rotation: Rotation::R0 };
    pub const CLAYTON90: CopulaKind = CopulaKind { family: Family::Clayton, rotation: Rotation::R90 };
    pub const CLAYTON180: CopulaKind = CopulaKind { family: Family::Clayton, rotation: Rotation::R180 };
    pub const CLAYTON270: CopulaKind = CopulaKind { family: Family::Clayton, rotation: Rotation::R270 };

    pub const ALL: [CopulaKind; 6] = [
        Self::BVN,
        Self::FRANK,
        Self::CLAYTON0,
        Self::CLAYTON90,
        Self::CLAYTON180,
        Self::CLAYTON270,
    ];

    /// The copula of this kind at independence.
    pub fn independence(self) -> CopulaSpec {
        CopulaSpec { family: self.family, rotation: self.rotation, theta: 0.0 }
    }

    pub fn with_theta(self, theta: f64) -> Result<CopulaSpec> {
        CopulaSpec::new(self.family, self.rotation, theta)
    }

    pub fn with_tau(self, tau: f64) -> Result<CopulaSpec> {
        CopulaSpec::from_tau(self.family, self.rotation, tau)
    }

    /// Sign that Kendall's tau must have (`0` means either).
    pub fn tau_sign(self) -> f64 {
        match (self.family, self.rotation) {
            (Family::Clayton, r) if r.is_negative() => -1.0,
            (Family::Clayton, _) => 1.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for CopulaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.independence())
    }
}

impl FromStr for CopulaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bvn" | "normal" | "gaussian" => Ok(Self::BVN),
            "frank" => Ok(Self::FRANK),
            "clayton" | "clayton0" => Ok(Self::CLAYTON0),
            "clayton90" => Ok(Self::CLAYTON90),
            "clayton180" => Ok(Self::CLAYTON180),
            "clayton270" => Ok(Self::CLAYTON270),
            other => Err(Error::domain(format!("unknown copula '{other}'"))),
        }
    }
}

impl CopulaSpec {
    pub fn new(family: Family, rotation: Rotation, theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::domain(format!("copula parameter must be finite, got {theta}")));
        }
        match family {
            Family::Bvn | Family::Frank if rotation != Rotation::R0 => {
                return Err(Error::domain(format!("{family:?} copula is only defined without rotation")));
            }
            Family::Bvn if !(-1.0..=1.0).contains(&theta) => {
                return Err(Error::domain(format!("BVN correlation must lie in [-1, 1], got {theta}")));
            }
            Family::Clayton if !(0.0..=CLAYTON_MAX_THETA).contains(&theta) => {
                return Err(Error::domain(format!(
                    "Clayton parameter must lie in [0, {CLAYTON_MAX_THETA}], got {theta}"
                )));
            }
            _ => {}
        }
        Ok(CopulaSpec { family, rotation, theta })
    }

    pub fn independence() -> Self {
        CopulaSpec { family: Family::Bvn, rotation: Rotation::R0, theta: 0.0 }
    }

    /// The Fréchet lower bound, `C(u1, u2) = max(u1 + u2 - 1, 0)`.
    pub fn countermonotonic() -> Self {
        CopulaSpec { family: Family::Bvn, rotation: Rotation::R0, theta: -1.0 }
    }

    pub fn from_tau(family: Family, rotation: Rotation, tau: f64) -> Result<Self> {
        tau_to_theta(family, rotation, Tau::new(tau)?)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rotation(&self) -> Rotation {
        self.rotation
    }

    pub fn kind(&self) -> CopulaKind {
        CopulaKind { family: self.family, rotation: self.rotation }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.family, self.rotation, theta)
    }

    pub fn is_independence(&self) -> bool {
        match self.family {
            Family::Bvn => self.theta == 0.0,
            Family::Frank => self.theta.abs() < FRANK_INDEPENDENCE_EPS,
            Family::Clayton => self.theta < CLAYTON_INDEPENDENCE_EPS,
        }
    }

    pub fn is_countermonotonic(&self) -> bool {
        self.family == Family::Bvn && self.theta == -1.0
    }

    pub fn is_comonotonic(&self) -> bool {
        self.family == Family::Bvn && self.theta == 1.0
    }

    /// Copula of `(U2, U1)` when `(U1, U2)` follows `self`.
    pub fn transposed(&self) -> Self {
        let rotation = match self.rotation {
            Rotation::R90 => Rotation::R270,
            Rotation::R270 => Rotation::R90,
            r => r,
        };
        CopulaSpec { rotation, ..*self }
    }

    pub fn tau(&self) -> Tau {
        theta_to_tau(self)
    }

    /// `C(u1, u2)`.
    pub fn cdf(&self, u1: f64, u2: f64) -> Result<f64> {
        check_closed(u1, u2)?;
        if u1 == 0.0 || u2 == 0.0 {
            return Ok(0.0);
        }
        if u1 == 1.0 {
            return Ok(u2);
        }
        if u2 == 1.0 {
            return Ok(u1);
        }
        if self.is_independence() {
            return Ok(u1 * u2);
        }
        let base = self.base();
        let c = match self.rotation {
            Rotation::R0 => base.cdf(u1, u2),
            Rotation::R90 => u2 - base.cdf(1.0 - u1, u2),
            Rotation::R180 => u1 + u2 - 1.0 + base.cdf(1.0 - u1, 1.0 - u2),
            Rotation::R270 => u1 - base.cdf(u1, 1.0 - u2),
        };
        let lower = (u1 + u2 - 1.0).max(0.0);
        Ok(c.clamp(lower, u1.min(u2)))
    }

    /// `log c(u1, u2)` on the open unit square.
    pub fn ln_density(&self, u1: f64, u2: f64) -> Result<f64> {
        check_open(u1, u2)?;
        if self.is_independence() {
            return Ok(0.0);
        }
        if self.family == Family::Bvn && self.theta.abs() == 1.0 {
            return Err(Error::domain("the BVN copula at |rho| = 1 has no density"));
        }
        let base = self.base();
        Ok(match self.rotation {
            Rotation::R0 => base.ln_density(u1, u2),
            Rotation::R90 => base.ln_density(1.0 - u1, u2),
            Rotation::R180 => base.ln_density(1.0 - u1, 1.0 - u2),
            Rotation::R270 => base.ln_density(u1, 1.0 - u2),
        })
    }

    /// `c(u1, u2) = ∂²C/∂u1∂u2`.
    pub fn density(&self, u1: f64, u2: f64) -> Result<f64> {
        self.ln_density(u1, u2).map(f64::exp)
    }

    /// `C(v | u) = ∂C(u, v)/∂u`.
    pub fn cond_cdf(&self, v: f64, u: f64) -> Result<f64> {
        check_closed(u, v)?;
        if v == 0.0 || v == 1.0 {
            return Ok(v);
        }
        if self.is_independence() {
            return Ok(v);
        }
        if self.is_countermonotonic() {
            return Ok(if v >= 1.0 - u { 1.0 } else { 0.0 });
        }
        if self.is_comonotonic() {
            return Ok(if v >= u { 1.0 } else { 0.0 });
        }
        let base = self.base();
        let h = match self.rotation {
            Rotation::R0 => base.h(v, u),
            Rotation::R90 => base.h(v, 1.0 - u),
            Rotation::R180 => 1.0 - base.h(1.0 - v, 1.0 - u),
            Rotation::R270 => 1.0 - base.h(1.0 - v, u),
        };
        Ok(h.clamp(0.0, 1.0))
    }

    /// Inverse of [`cond_cdf`](Self::cond_cdf) in `v`: solves `C(v | u) = q`.
    pub fn inv_cond_cdf(&self, q: f64, u: f64) -> Result<f64> {
        check_closed(q, u)?;
        if q == 0.0 || q == 1.0 {
            return Ok(q);
        }
        if self.is_independence() {
            return Ok(q);
        }
        if self.is_countermonotonic() {
            return Ok(1.0 - u);
        }
        if self.is_comonotonic() {
            return Ok(u);
        }
        let base = self.base();
        let v = match self.rotation {
            Rotation::R0 => base.h_inv(q, u),
            Rotation::R90 => base.h_inv(q, 1.0 - u),
            Rotation::R180 => 1.0 - base.h_inv(1.0 - q, 1.0 - u),
            Rotation::R270 => 1.0 - base.h_inv(1.0 - q, u),
        };
        if !v.is_finite() {
            return Err(Error::NumericOverflow { op: "inv_cond_cdf", theta: self.theta, inputs: vec![q, u] });
        }
        // Keep the result on the open interval; an exact 0 or 1 here is
        // underflow of a value within one ulp of the boundary.
        Ok(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    fn base(&self) -> Base {
        match self.family {
            Family::Bvn => Base::Bvn(self.theta),
            Family::Frank if self.theta > 0.0 => Base::Frank(self.theta),
            Family::Frank => Base::FrankNeg(-self.theta),
            Family::Clayton => Base::Clayton(self.theta),
        }
    }
}

fn check_closed(a: f64, b: f64) -> Result<()> {
    if !((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)) {
        return Err(Error::domain(format!("copula arguments must lie in [0, 1], got ({a}, {b})")));
    }
    Ok(())
}

fn check_open(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
        return Err(Error::domain(format!("copula density arguments must lie in (0, 1), got ({a}, {b})")));
    }
    Ok(())
}

/// Unrotated families on their canonical parameter range. Negative Frank
/// parameters are handled through `C_{-θ}(u, v) = u - C_θ(u, 1 - v)`.
#[derive(Clone, Copy)]
enum Base {
    Bvn(f64),
    Frank(f64),
    FrankNeg(f64),
    Clayton(f64),
}

impl Base {
    fn cdf(self, u: f64, v: f64) -> f64 {
        match self {
            Base::Bvn(rho) => bvn_cdf(norm_quantile(u), norm_quantile(v), rho),
            Base::Frank(t) => frank_cdf(t, u, v),
            Base::FrankNeg(t) => u - frank_cdf(t, u, 1.0 - v),
            Base::Clayton(t) => (-clayton_ln_a(t, u, v) / t).exp(),
        }
    }

    fn h(self, v: f64, u: f64) -> f64 {
        match self {
            Base::Bvn(rho) => {
                let s = (1.0 - rho * rho).sqrt();
                norm_cdf((norm_quantile(v) - rho * norm_quantile(u)) / s)
            }
            Base::Frank(t) => frank_h(t, v, u),
            Base::FrankNeg(t) => 1.0 - frank_h(t, 1.0 - v, u),
            Base::Clayton(t) => {
                let ln_h = -(1.0 + t) * u.ln() - (1.0 + 1.0 / t) * clayton_ln_a(t, u, v);
                ln_h.exp()
            }
        }
    }

    fn h_inv(self, q: f64, u: f64) -> f64 {
        match self {
            Base::Bvn(rho) => {
                let s = (1.0 - rho * rho).sqrt();
                norm_cdf(s * norm_quantile(q) + rho * norm_quantile(u))
            }
            Base::Frank(t) => frank_h_inv(t, q, u),
            Base::FrankNeg(t) => 1.0 - frank_h_inv(t, 1.0 - q, u),
            Base::Clayton(t) => {
                // v = {(q^{-t/(1+t)} - 1) u^{-t} + 1}^{-1/t}
                let s = -t / (1.0 + t) * q.ln();
                let ln_x = s.exp_m1().ln() - t * u.ln();
                (-softplus(ln_x) / t).exp()
            }
        }
    }

    fn ln_density(self, u: f64, v: f64) -> f64 {
        match self {
            Base::Bvn(rho) => {
                let (z1, z2) = (norm_quantile(u), norm_quantile(v));
                let r2 = 1.0 - rho * rho;
                -0.5 * r2.ln() - (rho * rho * (z1 * z1 + z2 * z2) - 2.0 * rho * z1 * z2) / (2.0 * r2)
            }
            Base::Frank(t) => frank_ln_density(t, u, v),
            Base::FrankNeg(t) => frank_ln_density(t, u, 1.0 - v),
            Base::Clayton(t) => {
                (1.0 + t).ln() - (1.0 + t) * (u.ln() + v.ln()) - (1.0 / t + 2.0) * clayton_ln_a(t, u, v)
            }
        }
    }
}

/// `log(u^{-t} + v^{-t} - 1)` for the Clayton generator.
fn clayton_ln_a(t: f64, u: f64, v: f64) -> f64 {
    let a = -t * u.ln();
    let b = -t * v.ln();
    let m = a.max(b);
    if m < 1.0 {
        (a.exp_m1() + b.exp_m1()).ln_1p()
    } else {
        m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
    }
}

fn frank_cdf(t: f64, u: f64, v: f64) -> f64 {
    -((-t * u).exp_m1() * (-t * v).exp_m1() / (-t).exp_m1()).ln_1p() / t
}

/// Log of the two non-negative pieces of the Frank denominator
/// `e^{-tu}(1 - e^{-tv}) + e^{-tv}(1 - e^{-t(1-v)})`.
#[inline]
fn frank_den_parts(t: f64, u: f64, v: f64) -> (f64, f64) {
    let l1 = -t * u + (-(-t * v).exp_m1()).ln();
    let l2 = -t * v + (-(-t * (1.0 - v)).exp_m1()).ln();
    (l1, l2)
}

fn frank_h(t: f64, v: f64, u: f64) -> f64 {
    let (l1, l2) = frank_den_parts(t, u, v);
    1.0 / (1.0 + (l2 - l1).exp())
}

fn frank_h_inv(t: f64, q: f64, u: f64) -> f64 {
    // v = -t^{-1} log{1 - (1 - e^{-t}) / [(q^{-1} - 1) e^{-tu} + 1]}
    let x = ((1.0 - q) / q).ln() - t * u;
    (softplus(x) - log_add_exp(x, -t)) / t
}

fn frank_ln_density(t: f64, u: f64, v: f64) -> f64 {
    let (l1, l2) = frank_den_parts(t, u, v);
    t.ln() + (-(-t).exp_m1()).ln() - t * (u + v) - 2.0 * log_add_exp(l1, l2)
}

/// Debye function `D₁(x) = x⁻¹ ∫₀ˣ t/(eᵗ - 1) dt` for `x > 0`.
fn debye1(x: f64) -> f64 {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (nodes, weights) = RULE.get_or_init(|| legendre_symmetric(32));
    let pieces = (x / 8.0).ceil().max(1.0) as usize;
    let width = x / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let a = k as f64 * width;
        for (z, w) in nodes.iter().zip(weights) {
            let t = a + 0.5 * width * (z + 1.0);
            total += w * t / t.exp_m1();
        }
    }
    total * 0.5 * width / x
}

fn frank_tau(theta: f64) -> f64 {
    let t = theta.abs();
    let tau = if t < 1e-3 {
        t / 9.0 - t * t * t / 900.0
    } else {
        1.0 - 4.0 / t * (1.0 - debye1(t))
    };
    tau.copysign(theta)
}

/// Kendall's tau implied by a copula.
pub fn theta_to_tau(spec: &CopulaSpec) -> Tau {
    let theta = spec.theta;
    let tau = match spec.family {
        Family::Bvn => std::f64::consts::FRAC_2_PI * theta.asin(),
        Family::Frank if spec.is_independence() => 0.0,
        Family::Frank => frank_tau(theta),
        Family::Clayton => {
            let t = theta / (theta + 2.0);
            if spec.rotation.is_negative() {
                -t
            } else {
                t
            }
        }
    };
    Tau(tau.clamp(-1.0, 1.0))
}

/// Copula parameter that reproduces a Kendall's tau.
pub fn tau_to_theta(family: Family, rotation: Rotation, tau: Tau) -> Result<CopulaSpec> {
    let tau = tau.value();
    let theta = match family {
        Family::Bvn => (std::f64::consts::FRAC_PI_2 * tau).sin(),
        Family::Clayton => {
            let negative = rotation.is_negative();
            if (negative && tau > 0.0) || (!negative && tau < 0.0) {
                return Err(Error::domain(format!(
                    "Clayton rotated by {} degrees cannot have tau = {tau}",
                    rotation.degrees()
                )));
            }
            let a = tau.abs();
            let theta = 2.0 * a / (1.0 - a);
            if theta > CLAYTON_MAX_THETA {
                return Err(Error::domain(format!(
                    "tau = {tau} is beyond the Clayton parameter guard; use the boundary copula"
                )));
            }
            theta
        }
        Family::Frank => {
            if tau == 0.0 {
                0.0
            } else {
                let hi = frank_tau(FRANK_TAU_BRACKET);
                if tau.abs() >= hi {
                    return Err(Error::domain(format!(
                        "Frank tau {tau} outside the supported range (|tau| < {hi:.6})"
                    )));
                }
                brent(|t| frank_tau(t) - tau, -FRANK_TAU_BRACKET, FRANK_TAU_BRACKET, 1e-12, 200)?
            }
        }
    };
    CopulaSpec::new(family, rotation, theta)
}

pub fn copula_cdf(u1: f64, u2: f64, spec: &CopulaSpec) -> Result<f64> {
    spec.cdf(u1, u2)
}

pub fn copula_density(u1: f64, u2: f64, spec: &CopulaSpec) -> Result<f64> {
    spec.density(u1, u2)
}

pub fn cond_cdf(v: f64, u: f64, spec: &CopulaSpec) -> Result<f64> {
    spec.cond_cdf(v, u)
}

pub fn inv_cond_cdf(q: f64, u: f64, spec: &CopulaSpec) -> Result<f64> {
    spec.inv_cond_cdf(q, u)
}
