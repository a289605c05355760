use dtamix::simulation::{generate_meta_dataset, run_sim_study, SimConfig, PARAMETER_NAMES};
use dtamix::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn truth() -> ModelSpec {
    ModelSpec::copula_mixed(
        MarginSpec::beta(0.7, 0.2).unwrap(),
        MarginSpec::beta(0.9, 0.1).unwrap(),
        CopulaKind::CLAYTON270.with_tau(-0.5).unwrap(),
    )
}

fn config(replications: usize, seed: u64) -> SimConfig {
    let fitted = ["clayton270/beta", "clayton270/normal", "khs-clayton270", "sarmanov"].map(|m| m.parse().unwrap());
    SimConfig::new(20, replications, truth(), fitted.to_vec(), seed)
}

#[test]
fn same_seed_same_report_regardless_of_threads() {
    let cfg = config(6, 42);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run_sim_study(&cfg).unwrap());
    let b = three.install(|| run_sim_study(&cfg).unwrap());
    assert_eq!(a, b);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
    let c = run_sim_study(&config(6, 43)).unwrap();
    assert_ne!(a.replicates, c.replicates);
}

#[test]
fn accounting_and_rmse_identity() {
    let cfg = config(8, 7);
    let r = run_sim_study(&cfg).unwrap();
    assert_eq!(r.rows.len(), 4 * PARAMETER_NAMES.len());
    for (m, s) in r.models.iter().enumerate() {
        assert_eq!(s.converged + s.excluded, cfg.replications);
        assert_eq!(s.converged, r.replicates[m].iter().flatten().count());
        assert_eq!(s.flagged, s.excluded as f64 > 0.2 * cfg.replications as f64);
    }
    let n = cfg.n_studies as f64;
    for row in &r.rows {
        let (Some(b), Some(e)) = (row.n_bias, row.n_rmse) else { continue };
        let (b, sd, e) = (b / n, row.n_sd / n, e / n);
        assert!((e * e - b * b - sd * sd).abs() < 1e-6, "{row:?}");
    }
    let normal_scale = r.row(1, "scale1").unwrap();
    assert!(normal_scale.n_bias.is_none() && normal_scale.n_rmse.is_none());
}

#[test]
fn single_replication_is_one_fit() {
    let cfg = config(1, 5);
    let r = run_sim_study(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    rng.set_stream(0);
    let data = generate_meta_dataset(cfg.n_studies, &truth(), &mut rng).unwrap();
    let n = cfg.n_studies as f64;
    let t = truth();
    let want = [t.params()[0], t.params()[1], t.params()[2], t.params()[3], -0.5];
    for (m, template) in cfg.fitted_models.iter().enumerate() {
        let f = fit(&data, template, &cfg.fit_options).unwrap();
        if !f.converged {
            assert_eq!(r.models[m].excluded, 1);
            continue;
        }
        let est = [f.estimates[0], f.estimates[1], f.estimates[2], f.estimates[3], f.tau_hat.value()];
        for (k, p) in PARAMETER_NAMES.iter().enumerate() {
            let row = r.row(m, p).unwrap();
            assert_eq!(row.n_sd, 0.0);
            if let Some(b) = row.n_bias {
                assert!((b - n * (est[k] - want[k])).abs() < 1e-9, "{template} {p}");
                assert!((row.n_rmse.unwrap() - b.abs()).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(run_sim_study(&config(0, 1)).is_err());
    let mut c = config(1, 1);
    c.n_studies = 1;
    assert!(run_sim_study(&c).is_err());
    let mut c = config(1, 1);
    c.design.prevalence = 1.0;
    assert!(run_sim_study(&c).is_err());
}
