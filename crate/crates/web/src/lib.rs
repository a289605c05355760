//! Browser bindings for the demo page: fit a model to a pasted study table
//! and draw its SROC data, compare a model grid against the GLMM, and compute
//! one limiting-KHS table row. Every export returns a JSON string.

use dtamix::asymptotics::{table_a1_row, DEFAULT_TABLE_NQ};
use dtamix::dataset::read_csv;
use dtamix::inference::{curve_set, default_grid, vuong_test, DEFAULT_RESOLUTION};
use dtamix::{fit, gauss_legendre, FitOptions, FitResult, ModelSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const BASELINE: &str = "bvn/normal";
/// Contours are coarser than on the command line to keep the page responsive.
const PAGE_RESOLUTION: usize = DEFAULT_RESOLUTION / 2;

#[derive(Debug, Serialize)]
struct Estimates {
    model: String,
    pi1: f64,
    pi2: f64,
    scale1: f64,
    scale2: f64,
    theta: f64,
    tau: f64,
    se: [Option<f64>; 5],
    se_tau: Option<f64>,
    loglik: f64,
    converged: bool,
    boundary: bool,
    diagnostics: Vec<String>,
}

impl From<&FitResult> for Estimates {
    fn from(r: &FitResult) -> Self {
        let e = r.estimates;
        Estimates {
            model: r.model.to_string(),
            pi1: e[0],
            pi2: e[1],
            scale1: e[2],
            scale2: e[3],
            theta: r.model.theta(),
            tau: r.tau_hat.value(),
            se: r.se.as_ref().map(|s| s.params).unwrap_or([None; 5]),
            se_tau: r.se.as_ref().and_then(|s| s.tau),
            loglik: r.loglik.total,
            converged: r.converged,
            boundary: r.boundary,
            diagnostics: r.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Curve {
    q: f64,
    points: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
struct Region {
    level: f64,
    loops: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Serialize)]
struct Sroc {
    fit: Estimates,
    curves: Vec<Curve>,
    summary_point: (f64, f64),
    confidence_region: Option<Vec<(f64, f64)>>,
    predictive_regions: Vec<Region>,
    studies: Vec<(f64, f64, u32)>,
    notes: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Comparison {
    model: String,
    loglik: Option<f64>,
    tau: Option<f64>,
    vuong_statistic: Option<f64>,
    vuong_p_value: Option<f64>,
    status: String,
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn options(nq: usize) -> FitOptions {
    FitOptions { nq, ..Default::default() }
}

/// Fit `model` to a `study,TP,FN,FP,TN` table and compute its SROC data.
pub fn sroc_json(csv: &str, model: &str, nq: usize, quantiles: &[f64], levels: &[f64]) -> Result<String, String> {
    let ds = read_csv(csv.as_bytes(), "pasted").map_err(|e| e.to_string())?;
    let template: ModelSpec = model.parse().map_err(|e: dtamix::Error| e.to_string())?;
    let r = fit(&ds.studies, &template, &options(nq)).map_err(|e| e.to_string())?;
    if !r.converged {
        return Err(format!("{template} did not converge: {}", r.diagnostics.join("; ")));
    }
    let set = curve_set(&r, quantiles, &default_grid(), levels, 0.95, PAGE_RESOLUTION).map_err(|e| e.to_string())?;
    let studies = ds
        .studies
        .iter()
        .map(|s| (s.fp() as f64 / s.n2 as f64, s.y1 as f64 / s.n1 as f64, s.n1 + s.n2))
        .collect();
    let mut estimates = Estimates::from(&r);
    estimates.model = template.to_string();
    json(&Sroc {
        fit: estimates,
        curves: set.quantile_curves.into_iter().map(|c| Curve { q: c.q, points: c.points }).collect(),
        summary_point: set.summary_point,
        confidence_region: set.confidence_region,
        predictive_regions: set.predictive_contours.into_iter().map(|c| Region { level: c.level, loops: c.loops }).collect(),
        studies,
        notes: set.notes,
    })
}

/// Fit each named model and compare it with the GLMM by Vuong's test.
pub fn compare_json(csv: &str, models: &[String], nq: usize) -> Result<String, String> {
    let ds = read_csv(csv.as_bytes(), "pasted").map_err(|e| e.to_string())?;
    let mut names: Vec<String> = vec![BASELINE.to_string()];
    names.extend(models.iter().map(|m| m.trim().to_string()).filter(|m| !m.is_empty()));
    let mut templates: Vec<ModelSpec> = Vec::new();
    for n in &names {
        let t: ModelSpec = n.parse().map_err(|e: dtamix::Error| e.to_string())?;
        if !templates.iter().any(|x| x.to_string() == t.to_string()) {
            templates.push(t);
        }
    }
    let fits: Vec<_> = templates.iter().map(|t| fit(&ds.studies, t, &options(nq))).collect();
    let base = fits[0].as_ref().ok().filter(|r| r.converged);
    let rows: Vec<Comparison> = templates
        .iter()
        .zip(&fits)
        .enumerate()
        .map(|(i, (t, f))| match f {
            Ok(r) => {
                let v = base.filter(|_| i > 0 && r.converged).and_then(|b| vuong_test(&b.loglik, &r.loglik).ok());
                Comparison {
                    model: t.to_string(),
                    loglik: Some(r.loglik.total),
                    tau: Some(r.tau_hat.value()),
                    vuong_statistic: v.map(|v| v.statistic),
                    vuong_p_value: v.map(|v| v.p_value),
                    status: match (r.converged, r.boundary) {
                        (false, _) => "not converged".into(),
                        (true, true) => "countermonotonic".into(),
                        _ => "ok".into(),
                    },
                }
            }
            Err(e) => Comparison {
                model: t.to_string(),
                loglik: None,
                tau: None,
                vuong_statistic: None,
                vuong_p_value: None,
                status: e.to_string(),
            },
        })
        .collect();
    json(&rows)
}

/// Limiting KHS estimates for a BVN copula mixed model with common beta
/// margins and group size `n`.
pub fn table_row_json(rho: f64, pi: f64, gamma: f64, n: u32) -> Result<String, String> {
    if n > 50 {
        return Err("group sizes above 50 are too slow for the page".into());
    }
    let rule = gauss_legendre(DEFAULT_TABLE_NQ).map_err(|e| e.to_string())?;
    let row = table_a1_row(rho, pi, gamma, n, &rule).map_err(|e| e.to_string())?;
    json(&row)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<f64>().map_err(|_| format!("not a number: '{x}'")))
        .collect()
}

#[wasm_bindgen]
pub fn sroc(csv: &str, model: &str, nq: usize, quantiles: &str, levels: &str) -> Result<String, JsValue> {
    let q = parse_list(quantiles).map_err(|e| JsValue::from_str(&e))?;
    let l = parse_list(levels).map_err(|e| JsValue::from_str(&e))?;
    sroc_json(csv, model, nq, &q, &l).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare(csv: &str, models: &str, nq: usize) -> Result<String, JsValue> {
    let models: Vec<String> = models.split(',').map(String::from).collect();
    compare_json(csv, &models, nq).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn table_row(rho: f64, pi: f64, gamma: f64, n: u32) -> Result<String, JsValue> {
    table_row_json(rho, pi, gamma, n).map_err(|e| JsValue::from_str(&e))
}
