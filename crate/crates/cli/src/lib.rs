//! Command-line front end: fit model grids, draw SROC data, run simulation
//! studies and tabulate limiting KHS estimates.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

mod asymptotics;
mod fit;
pub mod output;
mod simulate;
mod sroc;

pub use fit::{fit_grid, FitRow};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const CONVERGENCE: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Convergence(String),
    Numeric(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => exit::VALIDATION,
            Failure::Convergence(_) => exit::CONVERGENCE,
            Failure::Numeric(_) => exit::NUMERIC,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Validation(format!("{}: {e}", path.display()))
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Convergence(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<dtamix::Error> for Failure {
    fn from(e: dtamix::Error) -> Self {
        use dtamix::Error::*;
        match e {
            Domain(_) | Size(_) | Validation { .. } | Parse { .. } | Io(_) => Failure::Validation(e.to_string()),
            NumericOverflow { .. } | Evaluation { .. } | Degenerate(_) => Failure::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dtamix", version, about = "Copula mixed models for diagnostic test accuracy meta-analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Gauss-Legendre nodes per dimension.
    #[arg(long, global = true, default_value_t = 15)]
    pub nq: usize,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Quantile levels for SROC curves.
    #[arg(long, global = true, value_delimiter = ',', default_value = "0.01,0.5,0.99")]
    pub quantiles: Vec<f64>,
    /// Predictive-region probability levels.
    #[arg(long, global = true, value_delimiter = ',', default_value = "0.5,0.95")]
    pub levels: Vec<f64>,
    /// Worker threads (0 uses all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Iteration cap for each likelihood maximisation.
    #[arg(long, global = true, default_value_t = 500)]
    pub max_iter: usize,
    /// Suppress the text report on standard output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit every margin/copula combination and compare with the GLMM.
    Fit(fit::FitArgs),
    /// Quantile curves, summary point, confidence and predictive regions.
    Sroc(sroc::SrocArgs),
    /// Monte-Carlo study of bias and efficiency.
    Simulate(simulate::SimulateArgs),
    /// Limiting KHS estimates under a BVN copula mixed model with beta margins.
    Asymptotics(asymptotics::AsymptoticsArgs),
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::VALIDATION } else { exit::OK };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if g.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(Failure::Validation("quantiles must lie in (0, 1)".into()));
    }
    if g.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Failure::Validation("levels must lie in (0, 1)".into()));
    }
    if !(2..=dtamix::quadrature::MAX_NQ).contains(&g.nq) {
        return Err(Failure::Validation(format!("--nq must lie in 2..={}", dtamix::quadrature::MAX_NQ)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs)
        .build()
        .map_err(|e| Failure::Numeric(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => fit::run(g, a),
        Command::Sroc(a) => sroc::run(g, a),
        Command::Simulate(a) => simulate::run(g, a),
        Command::Asymptotics(a) => asymptotics::run(g, a),
    })
}

fn say(g: &Global, text: &str) {
    if !g.quiet {
        print!("{text}");
    }
}

fn out_path(dir: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    dir.as_ref().map(|d| d.join(name))
}

fn fit_options(g: &Global) -> dtamix::FitOptions {
    let mut o = dtamix::FitOptions { nq: g.nq, ..Default::default() };
    o.bfgs.max_iter = g.max_iter;
    o
}
