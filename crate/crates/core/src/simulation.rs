//! Simulated meta-analyses and the small-sample efficiency study.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitResult};
use crate::likelihood::{Dependence, ModelSpec};
use crate::margins::{latent_probability, StudyRecord};

/// Study size `n = round(lag + G)` with `G ~ Gamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub shape: f64,
    pub rate: f64,
    pub lag: f64,
}

impl Default for SizeDistribution {
    fn default() -> Self {
        SizeDistribution { shape: 1.2, rate: 0.01, lag: 30.0 }
    }
}

/// How studies are drawn, apart from the random-effects model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub size: SizeDistribution,
    /// Probability that a study participant is diseased.
    pub prevalence: f64,
}

impl Default for Design {
    fn default() -> Self {
        Design { size: SizeDistribution::default(), prevalence: 0.43 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedData {
    pub studies: Vec<StudyRecord>,
    /// Latent probabilities `(x1, x2)` per study.
    pub latent: Vec<(f64, f64)>,
    /// Arm splits redrawn because one arm was empty.
    pub redraws: usize,
}

fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draw `n_studies` studies from `true_model` with the default design.
pub fn generate_meta_dataset(n_studies: usize, true_model: &ModelSpec, rng: &mut impl Rng) -> Result<Vec<StudyRecord>> {
    generate_with_design(n_studies, true_model, &Design::default(), rng).map(|g| g.studies)
}

pub fn generate_with_design(
    n_studies: usize,
    true_model: &ModelSpec,
    design: &Design,
    rng: &mut impl Rng,
) -> Result<GeneratedData> {
    let copula = match true_model.dependence {
        Dependence::Copula(c) => c,
        _ => return Err(Error::domain("data can only be generated from a copula mixed model")),
    };
    if !(design.prevalence > 0.0 && design.prevalence < 1.0) {
        return Err(Error::domain(format!("prevalence must lie in (0, 1), got {}", design.prevalence)));
    }
    let gamma = Gamma::new(design.size.shape, 1.0 / design.size.rate)
        .map_err(|e| Error::domain(format!("study-size distribution: {e}")))?;
    let mut out = GeneratedData { studies: Vec::with_capacity(n_studies), latent: Vec::with_capacity(n_studies), redraws: 0 };
    for _ in 0..n_studies {
        let n = (design.size.lag + gamma.sample(rng)).round_ties_even().max(2.0) as u32;
        let u1 = open_unit(rng);
        let u2 = copula.inv_cond_cdf(open_unit(rng), u1)?;
        let x1 = latent_probability(u1, &true_model.margin1)?;
        let x2 = latent_probability(u2, &true_model.margin2)?;
        let split = Binomial::new(n as u64, design.prevalence).map_err(|e| Error::domain(e.to_string()))?;
        let n1 = loop {
            let k = split.sample(rng) as u32;
            if k > 0 && k < n {
                break k;
            }
            out.redraws += 1;
        };
        let n2 = n - n1;
        let y = |nj: u32, x: f64| ((nj as f64 * x).round_ties_even().clamp(0.0, nj as f64)) as u32;
        out.studies.push(StudyRecord::new(y(n1, x1), n1, y(n2, x2), n2)?);
        out.latent.push((x1, x2));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_studies: usize,
    pub replications: usize,
    pub true_model: ModelSpec,
    pub design: Design,
    pub seed: u64,
    pub fitted_models: Vec<ModelSpec>,
    pub fit_options: FitOptions,
}

impl SimConfig {
    pub fn new(n_studies: usize, replications: usize, true_model: ModelSpec, fitted_models: Vec<ModelSpec>, seed: u64) -> Self {
        SimConfig {
            n_studies,
            replications,
            true_model,
            design: Design::default(),
            seed,
            fitted_models,
            fit_options: FitOptions::default(),
        }
    }
}

pub const PARAMETER_NAMES: [&str; 5] = ["pi1", "pi2", "scale1", "scale2", "tau"];

/// Estimates of one fitted model in one replication: `(π1, π2, s1, s2, τ)`
/// and their squared standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub estimates: [f64; 5],
    pub variances: [Option<f64>; 5],
}

impl Replicate {
    fn from_fit(r: &FitResult) -> Self {
        let e = r.estimates;
        let mut variances = [None; 5];
        if let Some(se) = &r.se {
            for k in 0..4 {
                variances[k] = se.params[k].map(|s| s * s);
            }
            variances[4] = se.tau.map(|s| s * s);
        }
        Replicate { estimates: [e[0], e[1], e[2], e[3], r.tau_hat.value()], variances }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub model: String,
    pub margin: String,
    pub copula: String,
    pub parameter: String,
    /// `None` where the truth has no counterpart in the fitted model.
    pub n_bias: Option<f64>,
    pub n_sd: f64,
    pub n_sqrt_vbar: Option<f64>,
    pub n_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub converged: usize,
    pub excluded: usize,
    /// More than 20% of replications excluded.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n_studies: usize,
    pub replications: usize,
    pub truth: [f64; 5],
    pub rows: Vec<SimRow>,
    pub models: Vec<ModelSummary>,
    pub redraws: usize,
    /// `replicates[model][replication]`, `None` when excluded.
    pub replicates: Vec<Vec<Option<Replicate>>>,
}

impl SimReport {
    pub fn row(&self, model: usize, parameter: &str) -> Option<&SimRow> {
        self.rows.iter().filter(|r| r.parameter == parameter).nth(model)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(["model", "margin", "copula", "parameter", "n_bias", "n_sd", "n_sqrt_vbar", "n_rmse"])
            .map_err(io)?;
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.model.clone(),
                r.margin.clone(),
                r.copula.clone(),
                r.parameter.clone(),
                fmt(r.n_bias),
                fmt(Some(r.n_sd)),
                fmt(r.n_sqrt_vbar),
                fmt(r.n_rmse),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Pairwise summation.
fn psum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    psum(a) + psum(b)
}

fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

struct RepOutcome {
    fits: Vec<Option<Replicate>>,
    redraws: usize,
}

fn one_replication(config: &SimConfig, rep: usize) -> Result<RepOutcome> {
    let mut rng = replication_rng(config.seed, rep);
    let data = generate_with_design(config.n_studies, &config.true_model, &config.design, &mut rng)?;
    let fits = config
        .fitted_models
        .iter()
        .map(|t| match fit(&data.studies, t, &config.fit_options) {
            Ok(r) if r.converged => Some(Replicate::from_fit(&r)),
            _ => None,
        })
        .collect();
    Ok(RepOutcome { fits, redraws: data.redraws })
}

/// Run the Monte-Carlo study. Replications use independent streams derived
/// from `(seed, replication)`, so the report does not depend on scheduling.
pub fn run_sim_study(config: &SimConfig) -> Result<SimReport> {
    if config.n_studies < 2 {
        return Err(Error::domain("at least 2 studies per replication are required"));
    }
    if config.replications == 0 {
        return Err(Error::domain("at least one replication is required"));
    }
    if config.fitted_models.is_empty() {
        return Err(Error::domain("no models to fit"));
    }
    let reps: Vec<usize> = (0..config.replications).collect();
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<RepOutcome>> = {
        use rayon::prelude::*;
        reps.par_iter().map(|&r| one_replication(config, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<RepOutcome>> = reps.iter().map(|&r| one_replication(config, r)).collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let truth = {
        let p = config.true_model.params();
        [p[0], p[1], p[2], p[3], config.true_model.tau()]
    };
    let nf = config.n_studies as f64;
    let mut rows = Vec::new();
    let mut models = Vec::new();
    let mut replicates = Vec::new();
    for (m, template) in config.fitted_models.iter().enumerate() {
        let reps: Vec<Option<Replicate>> = outcomes.iter().map(|o| o.fits[m]).collect();
        let kept: Vec<&Replicate> = reps.iter().flatten().collect();
        let converged = kept.len();
        let excluded = config.replications - converged;
        models.push(ModelSummary {
            model: template.to_string(),
            converged,
            excluded,
            flagged: excluded as f64 > 0.2 * config.replications as f64,
        });
        let copula = template.copula_kind().map(|k| k.to_string()).unwrap_or_else(|| "sarmanov".into());
        for (k, name) in PARAMETER_NAMES.iter().enumerate() {
            let comparable = k < 2 || k == 4 || template.margin_kind() == config.true_model.margin_kind();
            let row = if converged == 0 {
                SimRow {
                    model: template.variant().to_string(),
                    margin: template.margin_kind().to_string(),
                    copula: copula.clone(),
                    parameter: name.to_string(),
                    n_bias: None,
                    n_sd: f64::NAN,
                    n_sqrt_vbar: None,
                    n_rmse: None,
                }
            } else {
                let est: Vec<f64> = kept.iter().map(|r| r.estimates[k]).collect();
                let c = converged as f64;
                let mean = psum(&est) / c;
                let dev: Vec<f64> = est.iter().map(|e| (e - mean).powi(2)).collect();
                let sd = (psum(&dev) / c).sqrt();
                let sq: Vec<f64> = est.iter().map(|e| (e - truth[k]).powi(2)).collect();
                let rmse = (psum(&sq) / c).sqrt();
                let vars: Vec<f64> = kept.iter().filter_map(|r| r.variances[k]).collect();
                let vbar = (!vars.is_empty()).then(|| psum(&vars) / vars.len() as f64);
                SimRow {
                    model: template.variant().to_string(),
                    margin: template.margin_kind().to_string(),
                    copula: copula.clone(),
                    parameter: name.to_string(),
                    n_bias: comparable.then_some(nf * (mean - truth[k])),
                    n_sd: nf * sd,
                    n_sqrt_vbar: vbar.map(|v| nf * v.sqrt()),
                    n_rmse: comparable.then_some(nf * rmse),
                }
            };
            rows.push(row);
        }
        replicates.push(reps);
    }
    Ok(SimReport {
        n_studies: config.n_studies,
        replications: config.replications,
        truth,
        rows,
        models,
        redraws: outcomes.iter().map(|o| o.redraws).sum(),
        replicates,
    })
}
