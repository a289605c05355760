use std::path::PathBuf;

use clap::Args;
use dtamix::simulation::{run_sim_study, SimConfig, SimReport, SimRow};
use dtamix::{ModelSpec, Variant};
use serde::Serialize;

use crate::output::{opt, sig6, text_table, write_atomic, write_json};
use crate::{fit_options, out_path, say, Failure, Global};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generating copula mixed model, e.g. clayton270/beta.
    #[arg(long, default_value = "clayton270/beta")]
    pub true_model: String,
    #[arg(long, default_value_t = 0.7)]
    pub pi1: f64,
    #[arg(long, default_value_t = 0.9)]
    pub pi2: f64,
    /// σ1 for normal margins, γ1 for beta margins.
    #[arg(long, default_value_t = 0.2)]
    pub scale1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub scale2: f64,
    /// Kendall's tau of the generating copula.
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, default_value_t = 50)]
    pub studies: usize,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    /// Models fitted to each replicate; defaults to the true model, its
    /// normal-margin counterpart and the KHS approximation with its copula.
    #[arg(long = "fit", value_delimiter = ',', value_name = "NAME")]
    pub fitted: Vec<String>,
    /// Directory for sim_report.csv and sim_report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SimJson<'a> {
    true_model: String,
    n_studies: usize,
    replications: usize,
    seed: u64,
    nq: usize,
    truth: [f64; 5],
    redraws: usize,
    models: &'a [dtamix::simulation::ModelSummary],
    rows: &'a [SimRow],
}

pub fn true_model(args: &SimulateArgs) -> Result<ModelSpec, Failure> {
    let template: ModelSpec = args.true_model.parse()?;
    let kind = match (template.variant(), template.copula_kind()) {
        (Variant::CopulaMixed, Some(k)) => k,
        _ => return Err(Failure::Validation(format!("data can only be generated from a copula mixed model, got {template}"))),
    };
    let theta = kind.with_tau(args.tau)?.theta();
    Ok(template.with_params(&[args.pi1, args.pi2, args.scale1, args.scale2, theta])?)
}

fn fitted_models(args: &SimulateArgs, truth: &ModelSpec) -> Result<Vec<ModelSpec>, Failure> {
    let names: Vec<String> = if args.fitted.is_empty() {
        let c = truth.copula_kind().expect("copula model");
        vec![truth.to_string(), format!("{c}/normal"), format!("khs-{c}/beta")]
    } else {
        args.fitted.clone()
    };
    let mut out: Vec<ModelSpec> = Vec::new();
    for n in names {
        let m: ModelSpec = n.parse()?;
        if !out.iter().any(|o| o.to_string() == m.to_string()) {
            out.push(m);
        }
    }
    Ok(out)
}

fn rounded(rows: &[SimRow]) -> Vec<SimRow> {
    rows.iter()
        .map(|r| SimRow {
            n_bias: r.n_bias.map(sig6),
            n_sd: sig6(r.n_sd),
            n_sqrt_vbar: r.n_sqrt_vbar.map(sig6),
            n_rmse: r.n_rmse.map(sig6),
            ..r.clone()
        })
        .collect()
}

pub fn report_csv(rows: &[SimRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn text_report(config: &SimConfig, report: &SimReport, rows: &[SimRow]) -> String {
    let mut s = format!(
        "{} replications of {} studies from {} (seed {}); values scaled by N\n",
        report.replications, report.n_studies, config.true_model, config.seed
    );
    let header = ["model", "margin", "copula", "parameter", "N*bias", "N*sd", "N*sqrt(vbar)", "N*rmse"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.margin.clone(),
                r.copula.clone(),
                r.parameter.clone(),
                opt(r.n_bias),
                opt(Some(r.n_sd)),
                opt(r.n_sqrt_vbar),
                opt(r.n_rmse),
            ]
        })
        .collect();
    s.push_str(&text_table(&header, &cells));
    for m in &report.models {
        s.push_str(&format!("{}: {} converged, {} excluded", m.model, m.converged, m.excluded));
        s.push_str(if m.flagged { " (more than 20% excluded)\n" } else { "\n" });
    }
    if report.redraws > 0 {
        s.push_str(&format!("{} disease-status redraws\n", report.redraws));
    }
    s
}

pub fn run(g: &Global, args: &SimulateArgs) -> Result<(), Failure> {
    let truth = true_model(args)?;
    let fitted = fitted_models(args, &truth)?;
    let mut config = SimConfig::new(args.studies, args.replications, truth, fitted, g.seed);
    config.fit_options = fit_options(g);
    let report = run_sim_study(&config)?;
    let rows = rounded(&report.rows);
    say(g, &text_report(&config, &report, &rows));
    if let Some(p) = out_path(&args.out, "sim_report.csv") {
        write_atomic(&p, &report_csv(&rows))?;
    }
    if let Some(p) = out_path(&args.out, "sim_report.json") {
        let json = SimJson {
            true_model: config.true_model.to_string(),
            n_studies: report.n_studies,
            replications: report.replications,
            seed: config.seed,
            nq: g.nq,
            truth: report.truth.map(sig6),
            redraws: report.redraws,
            models: &report.models,
            rows: &rows,
        };
        write_json(&p, &json)?;
    }
    if report.models.iter().all(|m| m.converged == 0) {
        return Err(Failure::Convergence("no fitted model converged in any replication".into()));
    }
    Ok(())
}
