use std::path::PathBuf;

use clap::Args;
use dtamix::inference::vuong_test;
use dtamix::likelihood::{sarmanov_admissible_range, Dependence};
use dtamix::{CopulaKind, Dataset, FitOptions, FitResult, MarginKind, ModelSpec, StudyRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{num, opt, sig6, text_table, write_atomic, write_json};
use crate::{fit_options, out_path, say, Failure, Global};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Study table with header study,TP,FN,FP,TN.
    pub data: PathBuf,
    /// Fit only these models (e.g. clayton270/beta, glmm, khs-bvn/beta); repeatable.
    #[arg(long = "model", value_name = "NAME")]
    pub models: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "normal,beta")]
    pub margins: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "bvn,frank,clayton0,clayton90,clayton180,clayton270")]
    pub copulas: Vec<String>,
    /// Approximate competitors added to the grid: khs[-<copula>], sarmanov.
    #[arg(long, value_delimiter = ',')]
    pub competitors: Vec<String>,
    /// Directory for fit_report.csv and fit_report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One line of the fit report. CSV and JSON share these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub model: String,
    pub variant: String,
    pub margin: String,
    pub copula: String,
    pub status: String,
    pub converged: bool,
    pub boundary: bool,
    pub pi1: Option<f64>,
    pub se_pi1: Option<f64>,
    pub pi2: Option<f64>,
    pub se_pi2: Option<f64>,
    pub scale1: Option<f64>,
    pub se_scale1: Option<f64>,
    pub scale2: Option<f64>,
    pub se_scale2: Option<f64>,
    pub theta: Option<f64>,
    pub tau: Option<f64>,
    pub se_tau: Option<f64>,
    pub loglik: Option<f64>,
    pub n_params: Option<usize>,
    /// Vuong statistic against the GLMM; positive favours this model.
    pub vuong_statistic: Option<f64>,
    pub vuong_p_value: Option<f64>,
    pub diagnostics: String,
}

#[derive(Debug, Serialize)]
struct FitReport<'a> {
    dataset: &'a str,
    studies: usize,
    nq: usize,
    baseline: &'static str,
    rows: &'a [FitRow],
}

pub const BASELINE: &str = "bvn/normal";

pub fn model_grid(args: &FitArgs) -> Result<Vec<ModelSpec>, Failure> {
    let names: Vec<String> = if args.models.is_empty() {
        let margins = args.margins.iter().map(|m| m.parse::<MarginKind>()).collect::<Result<Vec<_>, _>>()?;
        let copulas = args.copulas.iter().map(|c| c.parse::<CopulaKind>()).collect::<Result<Vec<_>, _>>()?;
        let mut v: Vec<String> =
            margins.iter().flat_map(|m| copulas.iter().map(move |c| format!("{c}/{m}"))).collect();
        v.extend(args.competitors.iter().cloned());
        v
    } else {
        args.models.clone()
    };
    let mut grid: Vec<ModelSpec> = Vec::new();
    for n in &names {
        let m: ModelSpec = n.parse()?;
        if !grid.iter().any(|g| g.to_string() == m.to_string()) {
            grid.push(m);
        }
    }
    if grid.is_empty() {
        return Err(Failure::Validation("no models selected".into()));
    }
    Ok(grid)
}

/// Fit each template concurrently, keeping input order.
pub fn fit_grid(
    data: &[StudyRecord],
    grid: &[ModelSpec],
    options: &FitOptions,
) -> Vec<dtamix::Result<FitResult>> {
    grid.par_iter().map(|t| dtamix::fit(data, t, options)).collect()
}

fn at_family_edge(data: &[StudyRecord], fit: &FitResult) -> bool {
    let c = match (fit.model.copula(), fit.model.dependence) {
        (Some(c), _) => c,
        (None, Dependence::Sarmanov(theta)) => {
            let p = fit.estimates;
            let (lo, hi) = sarmanov_admissible_range(data, p[0], p[1], p[2], p[3]);
            return (theta - lo).min(hi - theta) < 1e-6 * (hi - lo);
        }
        (None, _) => return false,
    };
    fit.boundary
        || fit.tau_hat.value().abs() > dtamix::estimation::BOUNDARY_TAU
        || (c.family() == dtamix::Family::Clayton && c.theta() < 1e-3)
}

pub fn report_rows(data: &[StudyRecord], grid: &[ModelSpec], fits: &[dtamix::Result<FitResult>]) -> Vec<FitRow> {
    let baseline = grid
        .iter()
        .zip(fits)
        .find(|(t, _)| t.to_string() == BASELINE)
        .and_then(|(_, f)| f.as_ref().ok())
        .filter(|f| f.converged);
    grid.iter()
        .zip(fits)
        .map(|(t, f)| {
            let copula = match t.dependence {
                Dependence::Copula(c) | Dependence::Khs(c) => c.to_string(),
                Dependence::Sarmanov(_) => "sarmanov".into(),
            };
            let mut row = FitRow {
                model: t.to_string(),
                variant: t.variant().to_string(),
                margin: t.margin_kind().to_string(),
                copula,
                status: "failed".into(),
                converged: false,
                boundary: false,
                pi1: None,
                se_pi1: None,
                pi2: None,
                se_pi2: None,
                scale1: None,
                se_scale1: None,
                scale2: None,
                se_scale2: None,
                theta: None,
                tau: None,
                se_tau: None,
                loglik: None,
                n_params: None,
                vuong_statistic: None,
                vuong_p_value: None,
                diagnostics: String::new(),
            };
            let fit = match f {
                Ok(fit) => fit,
                Err(e) => {
                    row.diagnostics = e.to_string();
                    return row;
                }
            };
            let se = |i: usize| fit.se.as_ref().and_then(|s| s.params[i]).map(sig6);
            let p = fit.estimates.map(sig6);
            row.converged = fit.converged;
            row.boundary = at_family_edge(data, fit);
            row.status = match (fit.converged, fit.boundary) {
                (false, _) => "not-converged",
                (true, true) => "countermonotonic",
                (true, false) if row.boundary => "boundary",
                _ => "ok",
            }
            .into();
            row.pi1 = Some(p[0]);
            row.se_pi1 = se(0);
            row.pi2 = Some(p[1]);
            row.se_pi2 = se(1);
            row.scale1 = Some(p[2]);
            row.se_scale1 = se(2);
            row.scale2 = Some(p[3]);
            row.se_scale2 = se(3);
            row.theta = Some(sig6(fit.model.theta()));
            row.tau = Some(sig6(fit.tau_hat.value()));
            row.se_tau = fit.se.as_ref().and_then(|s| s.tau).map(sig6);
            row.loglik = Some(sig6(fit.loglik.total));
            row.n_params = Some(fit.n_free());
            if let Some(b) = baseline {
                if row.model != BASELINE && fit.converged {
                    match vuong_test(&b.loglik, &fit.loglik) {
                        Ok(v) => {
                            row.vuong_statistic = Some(sig6(v.statistic));
                            row.vuong_p_value = Some(sig6(v.p_value));
                        }
                        Err(e) => row.diagnostics = format!("vuong: {e}"),
                    }
                }
            }
            let mut diags = fit.diagnostics.clone();
            if !row.diagnostics.is_empty() {
                diags.push(row.diagnostics.clone());
            }
            row.diagnostics = diags.join("; ");
            row
        })
        .collect()
}

pub fn report_csv(rows: &[FitRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn text_report(ds: &Dataset, nq: usize, rows: &[FitRow]) -> String {
    let best = rows
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| r.loglik)
        .fold(f64::NEG_INFINITY, f64::max);
    let header = ["model", "loglik", "pi1", "pi2", "scale1", "scale2", "tau", "se(tau)", "vuong", "p", "status"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mark = if r.converged && r.loglik == Some(best) { " *" } else { "" };
            vec![
                format!("{}{mark}", r.model),
                opt(r.loglik),
                opt(r.pi1),
                opt(r.pi2),
                opt(r.scale1),
                opt(r.scale2),
                opt(r.tau),
                opt(r.se_tau),
                opt(r.vuong_statistic),
                opt(r.vuong_p_value),
                r.status.clone(),
            ]
        })
        .collect();
    let mut s = format!("{}: {} studies, nq = {nq}; Vuong against {BASELINE}\n", ds.name, ds.len());
    s.push_str(&text_table(&header, &cells));
    if best.is_finite() {
        s.push_str(&format!("* best log-likelihood ({})\n", num(best)));
    }
    for r in rows.iter().filter(|r| !r.diagnostics.is_empty()) {
        s.push_str(&format!("{}: {}\n", r.model, r.diagnostics));
    }
    s
}

pub fn run(g: &Global, args: &FitArgs) -> Result<(), Failure> {
    let ds = dtamix::dataset::ingest(&args.data)?;
    let grid = model_grid(args)?;
    let fits = fit_grid(&ds.studies, &grid, &fit_options(g));
    let rows = report_rows(&ds.studies, &grid, &fits);
    say(g, &text_report(&ds, g.nq, &rows));
    if let Some(p) = out_path(&args.out, "fit_report.csv") {
        write_atomic(&p, &report_csv(&rows))?;
    }
    if let Some(p) = out_path(&args.out, "fit_report.json") {
        let report = FitReport { dataset: &ds.name, studies: ds.len(), nq: g.nq, baseline: BASELINE, rows: &rows };
        write_json(&p, &report)?;
    }
    if rows.iter().any(|r| r.converged) {
        return Ok(());
    }
    let detail: Vec<String> = rows.iter().map(|r| format!("{}: {}", r.model, r.diagnostics)).collect();
    let all_invalid = fits.iter().all(|f| matches!(f, Err(e) if Failure::from(e.clone()).code() == crate::exit::VALIDATION));
    let msg = format!("no model converged\n{}", detail.join("\n"));
    if all_invalid {
        Err(Failure::Validation(msg))
    } else {
        Err(Failure::Convergence(msg))
    }
}
