use std::path::{Path, PathBuf};

use clap::Args;
use dtamix::inference::{curve_set, linspace, CurveSet, DEFAULT_RESOLUTION};
use dtamix::{Dataset, FitResult, ModelSpec};
use serde::Serialize;

use crate::output::{num, points_rows, round_points, sig6, write_csv, write_json};
use crate::{fit_options, say, Failure, Global};

#[derive(Debug, Args)]
pub struct SrocArgs {
    /// Study table with header study,TP,FN,FP,TN.
    pub data: PathBuf,
    #[arg(long, default_value = "bvn/normal")]
    pub model: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of specificity values on each curve.
    #[arg(long, default_value_t = 200)]
    pub grid_size: usize,
    /// Coverage of the confidence region around the summary point.
    #[arg(long, default_value_t = 0.95)]
    pub coverage: f64,
    /// Cells per axis for the predictive contours.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
}

#[derive(Debug, Serialize)]
struct CurveJson {
    q: f64,
    file: String,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct ContourJson {
    level: f64,
    file: String,
    mass: f64,
    loops: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize)]
struct StudyJson {
    study: String,
    fpr: f64,
    sens: f64,
    weight: u32,
}

#[derive(Debug, Serialize)]
struct SrocJson {
    model: String,
    estimates: [f64; 5],
    tau: f64,
    loglik: f64,
    boundary: bool,
    curves: Vec<CurveJson>,
    summary_point: [f64; 2],
    confidence_region: Option<Vec<[f64; 2]>>,
    contours: Vec<ContourJson>,
    studies: Vec<StudyJson>,
    notes: Vec<String>,
}

/// Value as used in file names: shortest decimal form.
fn tag(x: f64) -> String {
    format!("{x}")
}

pub fn curve_file(q: f64) -> String {
    format!("curve_q{}.csv", tag(q))
}

pub fn contour_file(level: f64) -> String {
    format!("contour_{}.csv", tag(level))
}

fn study_points(ds: &Dataset) -> Vec<StudyJson> {
    ds.labels
        .iter()
        .zip(&ds.studies)
        .map(|(l, s)| StudyJson {
            study: l.clone(),
            fpr: sig6(s.fp() as f64 / s.n2 as f64),
            sens: sig6(s.y1 as f64 / s.n1 as f64),
            weight: s.n1 + s.n2,
        })
        .collect()
}

fn write_files(dir: &Path, fit: &FitResult, set: &CurveSet, ds: &Dataset) -> Result<SrocJson, Failure> {
    let mut curves = Vec::new();
    for c in &set.quantile_curves {
        let file = curve_file(c.q);
        write_csv(&dir.join(&file), &["fpr", "sens"], &points_rows(&c.points))?;
        curves.push(CurveJson { q: c.q, file, points: round_points(&c.points) });
    }
    let (fpr, sens) = set.summary_point;
    write_csv(&dir.join("summary_point.csv"), &["fpr", "sens"], &[vec![num(fpr), num(sens)]])?;
    if let Some(region) = &set.confidence_region {
        write_csv(&dir.join("confidence_region.csv"), &["fpr", "sens"], &points_rows(region))?;
    }
    let mut contours = Vec::new();
    for c in &set.predictive_contours {
        let file = contour_file(c.level);
        let rows: Vec<Vec<String>> = c
            .loops
            .iter()
            .enumerate()
            .flat_map(|(k, lp)| lp.iter().map(move |&(x, y)| vec![(k + 1).to_string(), num(x), num(y)]))
            .collect();
        write_csv(&dir.join(&file), &["loop", "fpr", "sens"], &rows)?;
        contours.push(ContourJson {
            level: c.level,
            file,
            mass: sig6(c.mass),
            loops: c.loops.iter().map(|lp| round_points(lp)).collect(),
        });
    }
    let studies = study_points(ds);
    let rows: Vec<Vec<String>> =
        studies.iter().map(|s| vec![num(s.fpr), num(s.sens), s.weight.to_string()]).collect();
    write_csv(&dir.join("studies.csv"), &["fpr", "sens", "weight"], &rows)?;
    Ok(SrocJson {
        model: fit.model.to_string(),
        estimates: fit.estimates.map(sig6),
        tau: sig6(fit.tau_hat.value()),
        loglik: sig6(fit.loglik.total),
        boundary: fit.boundary,
        curves,
        summary_point: [sig6(fpr), sig6(sens)],
        confidence_region: set.confidence_region.as_ref().map(|r| round_points(r)),
        contours,
        studies,
        notes: set.notes.clone(),
    })
}

pub fn run(g: &Global, args: &SrocArgs) -> Result<(), Failure> {
    if args.grid_size < 2 {
        return Err(Failure::Validation("--grid-size must be at least 2".into()));
    }
    if !(args.coverage > 0.0 && args.coverage < 1.0) {
        return Err(Failure::Validation("--coverage must lie in (0, 1)".into()));
    }
    let ds = dtamix::dataset::ingest(&args.data)?;
    let template: ModelSpec = args.model.parse()?;
    if template.copula().is_none() || template.variant() != dtamix::Variant::CopulaMixed {
        return Err(Failure::Validation(format!("SROC output needs a copula mixed model, got {template}")));
    }
    let fit = dtamix::fit(&ds.studies, &template, &fit_options(g))?;
    if !fit.converged {
        return Err(Failure::Convergence(format!("{template} did not converge: {}", fit.diagnostics.join("; "))));
    }
    let step = 0.5 / args.grid_size as f64;
    let grid = linspace(step, 1.0 - step, args.grid_size);
    let set = curve_set(&fit, &g.quantiles, &grid, &g.levels, args.coverage, args.resolution)?;
    let report = write_files(&args.out, &fit, &set, &ds)?;
    write_json(&args.out.join("sroc.json"), &report)?;

    let mut text = format!(
        "{template}: summary point sens {} spec {} (tau {}, loglik {})\n",
        num(set.summary_point.1),
        num(1.0 - set.summary_point.0),
        num(fit.tau_hat.value()),
        num(fit.loglik.total)
    );
    let mut files: Vec<&str> = report.curves.iter().map(|c| c.file.as_str()).collect();
    files.push("summary_point.csv");
    if report.confidence_region.is_some() {
        files.push("confidence_region.csv");
    }
    files.extend(report.contours.iter().map(|c| c.file.as_str()));
    files.extend(["studies.csv", "sroc.json"]);
    text.push_str(&format!("wrote {} to {}\n", files.join(", "), args.out.display()));
    say(g, &text);
    for n in &set.notes {
        eprintln!("notice: {n}");
    }
    Ok(())
}
