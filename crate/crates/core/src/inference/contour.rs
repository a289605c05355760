//! Level sets of the random-effects density.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::ModelSpec;

pub const DEFAULT_RESOLUTION: usize = 400;

/// Region of highest random-effects density holding probability `level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub level: f64,
    /// Density threshold on the (sensitivity, specificity) scale.
    pub threshold: f64,
    /// Probability of the grid cells at or above the threshold.
    pub mass: f64,
    /// Closed loops of `(fpr, sens)` points, first point repeated at the end.
    pub loops: Vec<Vec<(f64, f64)>>,
}

/// Cell-centre log densities and exact cell probabilities of the latent
/// `(x1, x2)` distribution on a `res × res` grid, `x1` major.
fn density_grid(model: &ModelSpec, res: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let copula = model
        .copula()
        .ok_or_else(|| Error::domain("predictive contours need a copula random-effects distribution"))?;
    if copula.is_countermonotonic() || copula.is_comonotonic() {
        return Err(Error::domain(
            "the random-effects distribution is degenerate at the Fréchet bound; use quantile_curve instead",
        ));
    }
    let (m1, m2) = (&model.margin1, &model.margin2);
    let h = 1.0 / res as f64;
    let edges1: Vec<f64> = (0..=res).map(|i| m1.cdf(i as f64 * h)).collect();
    let edges2: Vec<f64> = (0..=res).map(|j| m2.cdf(j as f64 * h)).collect();
    let centre = |k: usize| (k as f64 + 0.5) * h;
    let open = |u: f64| u.clamp(1e-16, 1.0 - 1e-16);
    let c1: Vec<(f64, f64)> = (0..res).map(|i| (open(m1.cdf(centre(i))), m1.ln_pdf(centre(i)))).collect();
    let c2: Vec<(f64, f64)> = (0..res).map(|j| (open(m2.cdf(centre(j))), m2.ln_pdf(centre(j)))).collect();

    let mut ln_dens = Vec::with_capacity(res * res);
    for &(u1, l1) in &c1 {
        for &(u2, l2) in &c2 {
            let v = copula.ln_density(u1, u2)? + l1 + l2;
            ln_dens.push(if v.is_nan() { f64::NEG_INFINITY } else { v });
        }
    }
    let mut cdf_row = vec![0.0; res + 1];
    let mut prev = vec![0.0; res + 1];
    let mut mass = vec![0.0; res * res];
    for i in 0..=res {
        for j in 0..=res {
            cdf_row[j] = copula.cdf(edges1[i], edges2[j])?;
        }
        if i > 0 {
            for j in 0..res {
                mass[(i - 1) * res + j] = (cdf_row[j + 1] - cdf_row[j] - prev[j + 1] + prev[j]).max(0.0);
            }
        }
        std::mem::swap(&mut prev, &mut cdf_row);
    }
    Ok((ln_dens, mass))
}

/// Highest-density regions of the random effects of `model` at each
/// probability in `levels`, on a `resolution × resolution` grid.
pub fn predictive_contours(model: &ModelSpec, levels: &[f64], resolution: usize) -> Result<Vec<Contour>> {
    if resolution < 4 {
        return Err(Error::domain("contour resolution must be at least 4"));
    }
    for &p in levels {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("contour level must lie in (0, 1), got {p}")));
        }
    }
    let res = resolution;
    let (ln_dens, mass) = density_grid(model, res)?;
    let mut order: Vec<usize> = (0..ln_dens.len()).collect();
    order.sort_by(|&a, &b| ln_dens[b].total_cmp(&ln_dens[a]).then(a.cmp(&b)));
    let mut cum = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &k in &order {
        acc += mass[k];
        cum.push(acc);
    }

    // padded grid; pad values sit below every threshold
    let floor = ln_dens.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min) - 50.0;
    let n = res + 2;
    let mut padded = vec![floor; n * n];
    for i in 0..res {
        for j in 0..res {
            let v = ln_dens[i * res + j];
            padded[(i + 1) * n + j + 1] = if v.is_finite() { v } else if v > 0.0 { f64::MAX } else { floor };
        }
    }
    let mut coords = vec![0.0; n];
    for (k, c) in coords.iter_mut().enumerate().take(res + 1).skip(1) {
        *c = (k as f64 - 0.5) / res as f64;
    }
    coords[n - 1] = 1.0;

    levels
        .iter()
        .map(|&p| {
            let k = cum.partition_point(|&c| c < p).min(cum.len() - 1);
            let t = ln_dens[order[k]];
            let loops = marching_squares(&padded, &coords, &coords, t)
                .into_iter()
                .map(|l| l.into_iter().map(|(x1, x2)| (1.0 - x2, x1)).collect())
                .collect();
            Ok(Contour { level: p, threshold: t.exp(), mass: cum[k], loops })
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Edge {
    /// Between grid points `(i, j)` and `(i + 1, j)`.
    H(usize, usize),
    /// Between grid points `(i, j)` and `(i, j + 1)`.
    V(usize, usize),
}

/// Closed level-`t` loops of `values` (row-major over `xs × ys`, `xs`
/// major). Points with value `>= t` are inside. The outermost ring of values
/// must lie below `t`.
pub(crate) fn marching_squares(values: &[f64], xs: &[f64], ys: &[f64], t: f64) -> Vec<Vec<(f64, f64)>> {
    let (nx, ny) = (xs.len(), ys.len());
    let at = |i: usize, j: usize| values[i * ny + j];
    let point = |e: Edge| -> (f64, f64) {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (a, b) = (at(i0, j0), at(i1, j1));
        let f = if a == b { 0.5 } else { ((t - a) / (b - a)).clamp(0.0, 1.0) };
        (xs[i0] + f * (xs[i1] - xs[i0]), ys[j0] + f * (ys[j1] - ys[j0]))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let corner = [at(i, j) >= t, at(i + 1, j) >= t, at(i + 1, j + 1) >= t, at(i, j + 1) >= t];
            // edge k joins corner k and corner k+1
            let edges = [Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j)];
            let crossing: Vec<usize> = (0..4).filter(|&k| corner[k] != corner[(k + 1) % 4]).collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    let centre = 0.25 * (at(i, j) + at(i + 1, j) + at(i + 1, j + 1) + at(i, j + 1)) >= t;
                    // cut off the corners whose state differs from the centre
                    for k in 0..4 {
                        if corner[k] != centre {
                            segments.push((edges[(k + 3) % 4], edges[k]));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        by_edge.entry(a).or_default().push(s);
        by_edge.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (first, mut cur) = segments[start];
        let mut pts = vec![point(first), point(cur)];
        while cur != first {
            let Some(&next) = by_edge[&cur].iter().find(|&&s| !used[s]) else { break };
            used[next] = true;
            let (a, b) = segments[next];
            cur = if a == cur { b } else { a };
            pts.push(point(cur));
        }
        if cur != first {
            pts.push(pts[0]);
        }
        loops.push(pts);
    }
    loops
}

/// Even-odd point-in-polygon test for a closed loop.
pub fn loop_contains(lp: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut inside = false;
    for w in lp.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if (y0 > p.1) != (y1 > p.1) {
            let x = x0 + (p.1 - y0) / (y1 - y0) * (x1 - x0);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Area enclosed by a closed loop.
pub fn loop_area(lp: &[(f64, f64)]) -> f64 {
    0.5 * lp.windows(2).map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1).sum::<f64>().abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_is_traced_as_one_closed_loop() {
        let n = 41;
        let xs: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                v[i * n + j] = -((xs[i] - 0.5).powi(2) + (xs[j] - 0.5).powi(2));
            }
        }
        let loops = marching_squares(&v, &xs, &xs, -0.09);
        assert_eq!(loops.len(), 1);
        let lp = &loops[0];
        assert_eq!(lp.first(), lp.last());
        assert!((loop_area(lp) - std::f64::consts::PI * 0.09).abs() < 3e-3);
        assert!(loop_contains(lp, (0.5, 0.5)) && !loop_contains(lp, (0.05, 0.05)));
    }

    #[test]
    fn two_bumps_give_two_loops() {
        let n = 60;
        let xs: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d1 = (xs[i] - 0.3).powi(2) + (xs[j] - 0.5).powi(2);
                let d2 = (xs[i] - 0.7).powi(2) + (xs[j] - 0.5).powi(2);
                v[i * n + j] = (-d1 / 0.005).exp() + (-d2 / 0.005).exp();
            }
        }
        let loops = marching_squares(&v, &xs, &xs, 0.5);
        assert_eq!(loops.len(), 2);
        assert!(loops.iter().all(|l| l.first() == l.last()));
    }
}
