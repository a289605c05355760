use dtamix::copulas::{CopulaKind, CopulaSpec};
use dtamix::likelihood::{loglik_copula_mixed, loglik_glmm, loglik_khs, loglik_sarmanov, ModelSpec};
use dtamix::margins::{MarginSpec, StudyRecord};
use dtamix::quadrature::gauss_legendre;
use dtamix::special::{beta_cdf, beta_ln_pdf, ln_choose, norm_quantile};

fn binom(y: u32, n: u32, x: f64) -> f64 {
    (ln_choose(n as u64, y as u64) + y as f64 * x.ln() + (n - y) as f64 * (-x).ln_1p()).exp()
}

fn study() -> StudyRecord {
    StudyRecord::new(3, 10, 8, 10).unwrap()
}

#[test]
fn clayton270_beta_matches_trapezoid_oracle() {
    let (m1, m2) = (MarginSpec::beta(0.7, 0.2).unwrap(), MarginSpec::beta(0.9, 0.1).unwrap());
    let cop = CopulaKind::CLAYTON270.with_theta(2.0).unwrap();
    let s = study();
    let (a1, b1) = (0.7 * 4.0, 0.3 * 4.0);
    let (a2, b2) = (0.9 * 9.0, 0.1 * 9.0);

    let k = 2000;
    let h = 1.0 / k as f64;
    // interior points only: the binomial factors vanish at both ends for these counts
    let pts: Vec<f64> = (1..k).map(|i| i as f64 * h).collect();
    let col1: Vec<(f64, f64)> =
        pts.iter().map(|&x| (beta_cdf(x, a1, b1), binom(s.y1, s.n1, x) * beta_ln_pdf(x, a1, b1).exp())).collect();
    let col2: Vec<(f64, f64)> =
        pts.iter().map(|&x| (beta_cdf(x, a2, b2), binom(s.y2, s.n2, x) * beta_ln_pdf(x, a2, b2).exp())).collect();
    let mut total = 0.0;
    for &(f1, g1) in &col1 {
        for &(f2, g2) in &col2 {
            total += g1 * g2 * cop.density(f1, f2).unwrap();
        }
    }
    let oracle = (total * h * h).ln();

    let model = ModelSpec::copula_mixed(m1, m2, cop);
    let got = loglik_copula_mixed(&[s], &model, &gauss_legendre(200).unwrap()).unwrap().total;
    // the Clayton corner makes the quadrature converge algebraically; at the
    // largest rule the remaining gap is a few 1e-6
    assert!((got - oracle).abs() < 1e-5, "{got} vs {oracle}");
}

#[test]
fn glmm_matches_bivariate_normal_grid() {
    let s = study();
    let (pi1, pi2, rho) = (0.7f64, 0.9f64, -0.5f64);
    let (mu1, mu2) = ((pi1 / (1.0 - pi1)).ln(), (pi2 / (1.0 - pi2)).ln());
    let expit = |t: f64| 1.0 / (1.0 + (-t).exp());
    // standard bivariate normal density on [-9, 9]², trapezoid with 1200 points per axis
    let (lo, hi, k) = (-9.0, 9.0, 1200);
    let h = (hi - lo) / k as f64;
    let det = 1.0 - rho * rho;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let mut total = 0.0;
    for i in 0..=k {
        let z1 = lo + i as f64 * h;
        let g1 = binom(s.y1, s.n1, expit(mu1 + z1));
        for j in 0..=k {
            let z2 = lo + j as f64 * h;
            let dens = norm * (-(z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / (2.0 * det)).exp();
            total += g1 * binom(s.y2, s.n2, expit(mu2 + z2)) * dens;
        }
    }
    let oracle = (total * h * h).ln();
    let got = loglik_glmm(&[s], pi1, pi2, 1.0, 1.0, rho, &gauss_legendre(200).unwrap()).unwrap().total;
    assert!((got - oracle).abs() < 1e-7, "{got} vs {oracle}");
}

#[test]
fn glmm_at_zero_correlation_is_product_of_univariate_integrals() {
    let rule = gauss_legendre(15).unwrap();
    let s = study();
    let (m1, m2) = (MarginSpec::normal(0.7, 1.3).unwrap(), MarginSpec::normal(0.9, 0.8).unwrap());
    let one = |m: &MarginSpec, y, n| -> f64 {
        rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| w * binom(y, n, m.quantile(u).unwrap())).sum::<f64>().ln()
    };
    let want = one(&m1, s.y1, s.n1) + one(&m2, s.y2, s.n2);
    let got = loglik_glmm(&[s], 0.7, 0.9, 1.3, 0.8, 0.0, &rule).unwrap().total;
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn independence_factorises_for_every_variant() {
    let rule = gauss_legendre(15).unwrap();
    let data = vec![
        StudyRecord::new(3, 10, 8, 10).unwrap(),
        StudyRecord::new(40, 52, 90, 97).unwrap(),
        StudyRecord::new(0, 12, 12, 12).unwrap(),
    ];
    for margin in [MarginSpec::beta(0.7, 0.2).unwrap(), MarginSpec::normal(0.7, 1.1).unwrap()] {
        let m2 = margin.with_params(0.85, margin.scale / 2.0).unwrap();
        let univariate = |m: &MarginSpec, y, n| -> f64 {
            rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| w * binom(y, n, m.quantile(u).unwrap())).sum::<f64>().ln()
        };
        let want: f64 = data.iter().map(|s| univariate(&margin, s.y1, s.n1) + univariate(&m2, s.y2, s.n2)).sum();
        for kind in CopulaKind::ALL {
            let model = ModelSpec::copula_mixed(margin, m2, kind.independence());
            let got = loglik_copula_mixed(&data, &model, &rule).unwrap().total;
            assert!((got - want).abs() < 1e-8, "{kind}: {got} vs {want}");
        }
    }
    let (b1, b2) = (MarginSpec::beta(0.7, 0.2).unwrap(), MarginSpec::beta(0.85, 0.1).unwrap());
    let exact: f64 = data
        .iter()
        .map(|s| {
            dtamix::margins::betabinomial_logpmf(s.y1, s.n1, 0.7, 0.2).unwrap()
                + dtamix::margins::betabinomial_logpmf(s.y2, s.n2, 0.85, 0.1).unwrap()
        })
        .sum();
    let khs = loglik_khs(&data, &ModelSpec::khs(b1, b2, CopulaSpec::independence()).unwrap()).unwrap().total;
    let sar = loglik_sarmanov(&data, 0.7, 0.85, 0.2, 0.1, 0.0).unwrap().total;
    assert!((khs - exact).abs() < 1e-8 && (sar - exact).abs() < 1e-8);
}

/// Beta-binomial pmf by the ratio recursion `p(y+1)/p(y)`, independent of the
/// log-beta route used by the library.
fn betabin_pmfs(n: u32, pi: f64, gamma: f64) -> Vec<f64> {
    let k = 1.0 / gamma - 1.0;
    let (a, b) = (pi * k, (1.0 - pi) * k);
    let mut p = vec![0.0; n as usize + 1];
    // p(0) = Π_{i<n} (b + i)/(a + b + i)
    p[0] = (0..n).map(|i| (b + i as f64) / (a + b + i as f64)).product();
    for y in 0..n {
        let yf = y as f64;
        p[y as usize + 1] = p[y as usize] * (n as f64 - yf) / (yf + 1.0) * (a + yf) / (b + n as f64 - yf - 1.0);
    }
    p
}

#[test]
fn khs_matches_direct_formula() {
    let s = StudyRecord::new(2, 5, 4, 5).unwrap();
    let (p1, p2) = (betabin_pmfs(5, 0.6, 0.1), betabin_pmfs(5, 0.8, 0.1));
    let h1: f64 = p1[..=2].iter().sum();
    let h2: f64 = p2[..=4].iter().sum();
    let rho: f64 = -0.5;
    let (z1, z2) = (norm_quantile(h1), norm_quantile(h2));
    let ln_c = -0.5 * (1.0 - rho * rho).ln()
        - (rho * rho * (z1 * z1 + z2 * z2) - 2.0 * rho * z1 * z2) / (2.0 * (1.0 - rho * rho));
    let want = ln_c + p1[2].ln() + p2[4].ln();
    let model = ModelSpec::khs(
        MarginSpec::beta(0.6, 0.1).unwrap(),
        MarginSpec::beta(0.8, 0.1).unwrap(),
        CopulaKind::BVN.with_theta(rho).unwrap(),
    )
    .unwrap();
    let got = loglik_khs(&[s], &model).unwrap().total;
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn sarmanov_matches_mixture_integral() {
    let s = study();
    let (pi1, pi2, g1, g2, theta) = (0.7, 0.9, 0.2, 0.1, 1.5);
    let (m1, m2) = (MarginSpec::beta(pi1, g1).unwrap(), MarginSpec::beta(pi2, g2).unwrap());
    let rule = gauss_legendre(200).unwrap();
    let mut total = 0.0;
    for (&u1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        let x1 = m1.quantile(u1).unwrap();
        for (&u2, &w2) in rule.nodes.iter().zip(&rule.weights) {
            let x2 = m2.quantile(u2).unwrap();
            total += w1 * w2 * binom(s.y1, s.n1, x1) * binom(s.y2, s.n2, x2) * (1.0 + theta * (x1 - pi1) * (x2 - pi2));
        }
    }
    let got = loglik_sarmanov(&[s], pi1, pi2, g1, g2, theta).unwrap().total;
    assert!((got - total.ln()).abs() < 1e-7, "{got} vs {}", total.ln());
}

#[test]
fn empty_data_is_rejected() {
    let model = ModelSpec::copula_mixed(
        MarginSpec::beta(0.7, 0.2).unwrap(),
        MarginSpec::beta(0.9, 0.1).unwrap(),
        CopulaSpec::independence(),
    );
    assert!(loglik_copula_mixed(&[], &model, &gauss_legendre(15).unwrap()).is_err());
}
