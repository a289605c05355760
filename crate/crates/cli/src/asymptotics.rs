use std::path::PathBuf;

use clap::Args;
use dtamix::asymptotics::{table_a1_row, TableA1Row, DEFAULT_TABLE_NQ};
use dtamix::gauss_legendre;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{num, sig6, text_table, write_atomic, write_json};
use crate::{out_path, say, Failure, Global};

/// Largest group size run without `--allow-large`.
pub const DEFAULT_MAX_N: u32 = 50;

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    /// True BVN correlations.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-0.2,-0.5,-0.8,-1")]
    pub rho: Vec<f64>,
    /// Common mean of the beta margins.
    #[arg(long, value_delimiter = ',', default_value = "0.7")]
    pub pi: Vec<f64>,
    /// Common dispersion of the beta margins.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub gamma: Vec<f64>,
    /// Diseased and non-diseased group size.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub n: Vec<u32>,
    /// Quadrature nodes for the outcome probabilities.
    #[arg(long, default_value_t = DEFAULT_TABLE_NQ)]
    pub table_nq: usize,
    /// Permit group sizes above 50; the outcome table grows as n squared.
    #[arg(long)]
    pub allow_large: bool,
    /// Directory for table_a1.csv and table_a1.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Table line with the CSV columns, in the JSON mirror too.
#[derive(Debug, Serialize)]
struct Line {
    rho_true: f64,
    n: u32,
    rho_khs: f64,
    pi_true: f64,
    pi_khs: f64,
    gamma_true: f64,
    gamma_khs: f64,
}

impl From<&TableA1Row> for Line {
    fn from(r: &TableA1Row) -> Self {
        Line {
            rho_true: r.rho_true,
            n: r.n,
            rho_khs: sig6(r.rho_khs),
            pi_true: r.pi_true,
            pi_khs: sig6(r.pi_khs),
            gamma_true: r.gamma_true,
            gamma_khs: sig6(r.gamma_khs),
        }
    }
}

pub fn run(g: &Global, args: &AsymptoticsArgs) -> Result<(), Failure> {
    if let Some(n) = args.n.iter().find(|&&n| n > DEFAULT_MAX_N && !args.allow_large) {
        return Err(Failure::Validation(format!("n = {n} exceeds {DEFAULT_MAX_N}; pass --allow-large to run it")));
    }
    if args.n.contains(&0) {
        return Err(Failure::Validation("n must be positive".into()));
    }
    let rule = gauss_legendre(args.table_nq)?;
    let mut configs = Vec::new();
    for &n in &args.n {
        for &pi in &args.pi {
            for &gamma in &args.gamma {
                for &rho in &args.rho {
                    configs.push((rho, pi, gamma, n));
                }
            }
        }
    }
    let rows = configs
        .par_iter()
        .map(|&(rho, pi, gamma, n)| table_a1_row(rho, pi, gamma, n, &rule))
        .collect::<dtamix::Result<Vec<_>>>()?;
    let lines: Vec<Line> = rows.iter().map(Line::from).collect();

    let header = ["rho_true", "n", "rho_khs", "pi_true", "pi_khs", "gamma_true", "gamma_khs"];
    let cells: Vec<Vec<String>> = lines
        .iter()
        .map(|l| {
            vec![
                num(l.rho_true),
                l.n.to_string(),
                num(l.rho_khs),
                num(l.pi_true),
                num(l.pi_khs),
                num(l.gamma_true),
                num(l.gamma_khs),
            ]
        })
        .collect();
    let mut text = format!("limiting KHS estimates, BVN copula with beta margins (nq = {})\n", args.table_nq);
    text.push_str(&text_table(&header, &cells));
    say(g, &text);
    if let Some(p) = out_path(&args.out, "table_a1.csv") {
        let mut w = csv::Writer::from_writer(Vec::new());
        for l in &lines {
            w.serialize(l).expect("in-memory write");
        }
        write_atomic(&p, &w.into_inner().expect("in-memory write"))?;
    }
    if let Some(p) = out_path(&args.out, "table_a1.json") {
        write_json(&p, &lines)?;
    }
    if let Some(r) = rows.iter().find(|r| !r.converged) {
        return Err(Failure::Convergence(format!(
            "limiting KHS maximisation did not converge for rho = {}, pi = {}, gamma = {}, n = {}",
            r.rho_true, r.pi_true, r.gamma_true, r.n
        )));
    }
    Ok(())
}
