use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use dtamix::simulation::generate_meta_dataset;
use dtamix::{CopulaSpec, Dataset, MarginSpec, ModelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dtamix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtamix")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_dataset(dir: &Path, name: &str, model: &ModelSpec, n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let studies = generate_meta_dataset(n, model, &mut rng).unwrap();
    let ds = Dataset::unlabelled(name, studies).unwrap();
    let path = dir.join(format!("{name}.csv"));
    ds.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn moderate(dir: &Path) -> String {
    let m = ModelSpec::copula_mixed(
        MarginSpec::normal(0.75, 0.6).unwrap(),
        MarginSpec::normal(0.9, 0.8).unwrap(),
        CopulaSpec::from_tau(dtamix::Family::Bvn, dtamix::Rotation::R0, -0.4).unwrap(),
    );
    write_dataset(dir, "moderate", &m, 25, 11)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn usage_errors_exit_with_validation_code() {
    assert_eq!(code(&dtamix(&[])), 1);
    assert_eq!(code(&dtamix(&["fit"])), 1);
    assert_eq!(code(&dtamix(&["fit", "x.csv", "--nq", "abc"])), 1);
    assert_eq!(code(&dtamix(&["--help"])), 0);
}

#[test]
fn invalid_input_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "study,TP,FN,FP,TN\ns1,1,1,1,1\ns2,-3,1,1,1\n").unwrap();
    let o = dtamix(&["fit", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "study,TP,FN,FP,TN\ns2,0,0,0,0\n").unwrap();
    assert_eq!(code(&dtamix(&["fit", empty.to_str().unwrap()])), 1);
    assert_eq!(code(&dtamix(&["fit", "/nonexistent/data.csv"])), 1);
    let data = moderate(dir.path());
    assert_eq!(code(&dtamix(&["fit", &data, "--model", "gumbel/beta"])), 1);
    assert_eq!(code(&dtamix(&["fit", &data, "--quantiles", "0,0.5"])), 1);
    assert_eq!(code(&dtamix(&["asymptotics", "--n", "100"])), 1);
}

#[test]
fn failed_fits_exit_with_convergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = moderate(dir.path());
    let o = dtamix(&["fit", &data, "--model", "frank/beta", "--model", "glmm", "--max-iter", "1"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("frank/beta") && err.contains("bvn/normal"), "{err}");
}

#[test]
fn single_model_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = moderate(dir.path());
    let out = dir.path().join("out");
    let o = dtamix(&["fit", &data, "--model", "clayton90/normal", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&out.join("fit_report.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "clayton90/normal");
}

#[test]
fn fit_report_csv_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = moderate(dir.path());
    let out = dir.path().join("out");
    let o = dtamix(&[
        "fit", &data, "--margins", "normal", "--copulas", "bvn,clayton270", "--competitors", "khs", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("fit_report.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<dtamix_cli::FitRow> = r.deserialize().map(|x| x.unwrap()).collect();
    assert_eq!(rows.iter().map(|r| r.model.as_str()).collect::<Vec<_>>(), ["bvn/normal", "clayton270/normal", "khs-bvn/beta"]);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("fit_report.json")).unwrap()).unwrap();
    let jrows: Vec<dtamix_cli::FitRow> = serde_json::from_value(json["rows"].clone()).unwrap();
    assert_eq!(rows, jrows);
    let keys: Vec<String> = json["rows"][0].as_object().unwrap().keys().cloned().collect();
    let mut sorted_header = header.clone();
    sorted_header.sort();
    let mut sorted_keys = keys;
    sorted_keys.sort();
    assert_eq!(sorted_header, sorted_keys);

    // Vuong against the baseline only, and antisymmetric in the obvious sense
    assert!(rows[0].vuong_statistic.is_none());
    assert!(rows[1].vuong_statistic.is_some() && rows[1].vuong_p_value.unwrap() <= 1.0);
    for r in &rows {
        for v in [r.pi1, r.pi2, r.tau, r.loglik].into_iter().flatten() {
            let s = format!("{:e}", v.abs());
            let digits = s.split('e').next().unwrap().replace('.', "");
            assert!(digits.len() <= 6, "{v}");
        }
    }
}

#[test]
fn countermonotonic_data_is_boundary_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let m = ModelSpec::copula_mixed(
        MarginSpec::normal(0.8, 0.7).unwrap(),
        MarginSpec::normal(0.85, 0.7).unwrap(),
        CopulaSpec::countermonotonic(),
    );
    let data = write_dataset(dir.path(), "counter", &m, 30, 5);
    let out = dir.path().join("out");
    let o = dtamix(&["fit", &data, "--margins", "normal,beta", "--copulas", "bvn,frank,clayton90,clayton270", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("fit_report.csv")).unwrap();
    let rows: Vec<dtamix_cli::FitRow> = r.deserialize().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert!(row.boundary, "{} not flagged: {:?}", row.model, row.tau);
    }
    let bvn = &rows[0];
    assert_eq!(bvn.status, "countermonotonic");
    assert_eq!(bvn.tau, Some(-1.0));
    assert_eq!(bvn.n_params, Some(4));
    assert!(bvn.diagnostics.contains("countermonotonic refit"));
}

#[test]
fn sroc_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = moderate(dir.path());
    let out = dir.path().join("sroc");
    let o = dtamix(&["sroc", &data, "--model", "clayton90/normal", "--out", out.to_str().unwrap(), "--grid-size", "150", "--resolution", "200"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    for q in ["0.01", "0.5", "0.99"] {
        let (h, rows) = read_csv(&out.join(format!("curve_q{q}.csv")));
        assert_eq!(h, ["fpr", "sens"]);
        assert_eq!(rows.len(), 150);
    }
    let (h, rows) = read_csv(&out.join("summary_point.csv"));
    assert_eq!((h.len(), rows.len()), (2, 1));
    let (_, region) = read_csv(&out.join("confidence_region.csv"));
    assert_eq!(region.first(), region.last());
    for level in ["0.5", "0.95"] {
        let (h, rows) = read_csv(&out.join(format!("contour_{level}.csv")));
        assert_eq!(h, ["loop", "fpr", "sens"]);
        let mut loops: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for r in rows {
            loops.entry(r[0].clone()).or_default().push(r[1..].to_vec());
        }
        assert!(!loops.is_empty());
        for lp in loops.values() {
            assert!(lp.len() >= 4);
            assert_eq!(lp.first(), lp.last(), "contour loop is not closed");
        }
    }
    let (h, rows) = read_csv(&out.join("studies.csv"));
    assert_eq!(h, ["fpr", "sens", "weight"]);
    let ds = dtamix::dataset::ingest(&data).unwrap();
    assert_eq!(rows.len(), ds.len());
    for (r, s) in rows.iter().zip(&ds.studies) {
        assert_eq!(r[2], (s.n1 + s.n2).to_string());
        let sens: f64 = r[1].parse().unwrap();
        assert!((sens - s.y1 as f64 / s.n1 as f64).abs() < 1e-5);
    }

    // regenerating gives byte-identical files
    let again = dir.path().join("again");
    let o = dtamix(&["sroc", &data, "--model", "clayton90/normal", "--out", again.to_str().unwrap(), "--grid-size", "150", "--resolution", "200", "--jobs", "1"]);
    assert_eq!(code(&o), 0);
    let mut names: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for n in names {
        assert_eq!(std::fs::read(out.join(&n)).unwrap(), std::fs::read(again.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn sroc_at_the_boundary_writes_a_single_curve() {
    let dir = tempfile::tempdir().unwrap();
    let m = ModelSpec::copula_mixed(
        MarginSpec::normal(0.8, 0.7).unwrap(),
        MarginSpec::normal(0.85, 0.7).unwrap(),
        CopulaSpec::countermonotonic(),
    );
    let data = write_dataset(dir.path(), "counter", &m, 30, 5);
    let out = dir.path().join("sroc");
    let o = dtamix(&["sroc", &data, "--model", "bvn/normal", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("notice"));
    let curves: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("curve_q"))
        .collect();
    assert_eq!(curves.len(), 1);
    assert!(!out.join("contour_0.5.csv").exists());
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, jobs: &str| {
        let out = dir.path().join(sub);
        let o = dtamix(&[
            "simulate", "--studies", "10", "--replications", "4", "--seed", "9", "--fit", "clayton270/beta,khs-clayton270/beta",
            "--out", out.to_str().unwrap(), "--jobs", jobs, "--quiet",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
        std::fs::read(out.join("sim_report.csv")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "2");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("model,margin,copula,parameter,n_bias,n_sd,n_sqrt_vbar,n_rmse\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 5);
}

#[test]
fn asymptotics_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("asy");
    let o = dtamix(&["asymptotics", "--rho", "-0.5", "--pi", "0.7", "--gamma", "0.1", "--n", "20", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out.join("table_a1.csv"));
    assert_eq!(h, ["rho_true", "n", "rho_khs", "pi_true", "pi_khs", "gamma_true", "gamma_khs"]);
    assert_eq!(rows.len(), 1);
    let v: Vec<f64> = rows[0].iter().map(|x| x.parse().unwrap()).collect();
    assert!((v[2] + 0.164).abs() < 0.005 && (v[4] - 0.708).abs() < 0.005 && (v[6] - 0.095).abs() < 0.005, "{v:?}");
}
