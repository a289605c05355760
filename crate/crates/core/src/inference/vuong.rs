use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::LogLikResult;
use crate::special::norm_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VuongResult {
    /// `√N D̄ / s`; positive values favour model 2.
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub dbar: f64,
    pub s: f64,
    pub n: usize,
}

/// Vuong's test on per-study log-likelihood contributions of two non-nested
/// models fitted to the same studies.
pub fn vuong_test(ll1: &LogLikResult, ll2: &LogLikResult) -> Result<VuongResult> {
    let n = ll1.per_study.len();
    if n != ll2.per_study.len() {
        return Err(Error::domain(format!(
            "log-likelihoods cover different numbers of studies ({n} vs {})",
            ll2.per_study.len()
        )));
    }
    if n < 2 {
        return Err(Error::domain("at least two studies are required"));
    }
    let d: Vec<f64> = ll2.per_study.iter().zip(&ll1.per_study).map(|(b, a)| b - a).collect();
    let nf = n as f64;
    let dbar = d.iter().sum::<f64>() / nf;
    let s2 = d.iter().map(|x| (x - dbar).powi(2)).sum::<f64>() / (nf - 1.0);
    let s = s2.sqrt();
    if !(s > 0.0) {
        return Err(Error::Degenerate("per-study log-likelihood differences have zero variance".into()));
    }
    let statistic = nf.sqrt() * dbar / s;
    let p_value = (2.0 * norm_cdf(-statistic.abs())).min(1.0);
    Ok(VuongResult { statistic, p_value, dbar, s, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ll(v: &[f64]) -> LogLikResult {
        LogLikResult { total: v.iter().sum(), per_study: v.to_vec(), clamp_events: 0 }
    }

    #[test]
    fn identical_models_are_degenerate() {
        let a = ll(&[-1.0, -2.0, -3.0]);
        assert!(matches!(vuong_test(&a, &a), Err(Error::Degenerate(_))));
    }

    #[test]
    fn symmetric_differences_give_zero() {
        let r = vuong_test(&ll(&[-1.0, -1.0]), &ll(&[-0.5, -1.5])).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn direct_recomputation() {
        let a = [-3.1, -2.7, -4.0, -3.3, -2.2];
        let b = [-3.0, -2.9, -3.6, -3.0, -2.1];
        let r = vuong_test(&ll(&a), &ll(&b)).unwrap();
        // D = (0.1, -0.2, 0.4, 0.3, 0.1), mean 0.14, sample variance 0.053
        assert!((r.dbar - 0.14).abs() < 1e-12);
        assert!((r.s - 0.053f64.sqrt()).abs() < 1e-12);
        assert!((r.statistic - 5f64.sqrt() * 0.14 / 0.053f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(matches!(vuong_test(&ll(&[-1.0, -2.0]), &ll(&[-1.0])), Err(Error::Domain(_))));
    }
}
