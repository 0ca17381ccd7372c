//! Local-linear kernel smoothing on a fixed design grid.
//!
//! The weights `W_j(t)` are computed once per `(grid, h)` and shared by every
//! curve smoothed with that bandwidth.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::matrix::CurveMatrix;
use crate::numerics::TimeGrid;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Triangular,
    Uniform,
}

pub fn kernel_eval(kernel: Kernel, u: f64) -> f64 {
    let a = u.abs();
    if a > 1.0 {
        return 0.0;
    }
    match kernel {
        Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
        Kernel::Triangular => 1.0 - a,
        Kernel::Uniform => 0.5,
    }
}

/// One row of the weight matrix: nonzero weights starting at source index `start`.
#[derive(Debug, Clone, PartialEq)]
struct WeightRow {
    start: usize,
    weights: Vec<f64>,
    fallback: bool,
}

/// `m x d` matrix of smoothing weights; row `i` holds `W_j(t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherWeightMatrix {
    source: TimeGrid,
    eval: TimeGrid,
    bandwidth: f64,
    kernel: Kernel,
    rows: Vec<WeightRow>,
}

impl SmootherWeightMatrix {
    pub fn source_grid(&self) -> &TimeGrid {
        &self.source
    }

    pub fn eval_grid(&self) -> &TimeGrid {
        &self.eval
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Whether eval point `i` used the Nadaraya-Watson fallback.
    pub fn is_fallback(&self, i: usize) -> bool {
        self.rows[i].fallback
    }

    pub fn fallback_count(&self) -> usize {
        self.rows.iter().filter(|r| r.fallback).count()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        if j < row.start {
            return 0.0;
        }
        row.weights.get(j - row.start).copied().unwrap_or(0.0)
    }

    /// Row `i` expanded to length `d`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.source.len()];
        let row = &self.rows[i];
        out[row.start..row.start + row.weights.len()].copy_from_slice(&row.weights);
        out
    }

    /// Apply to one observed row: `sum_j W_j(t_i) y_j` for every eval point.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.weights.iter().zip(&y[r.start..]).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// Smooth every row of `values`.
    pub fn smooth_rows(&self, values: &CurveMatrix) -> Result<CurveMatrix> {
        if values.cols() != self.source.len() {
            return contract(format!(
                "smoothing rows of length {} with a {}-point smoother",
                values.cols(),
                self.source.len()
            ));
        }
        let m = self.eval.len();
        let mut out = CurveMatrix::zeros(values.rows(), m);
        for (i, row) in values.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.apply(row));
        }
        Ok(out)
    }

    /// `W^T V W` restricted to the eval grid: covariance of smoothed errors
    /// whose raw covariance is `v` (dense row-major `d x d`).
    pub(crate) fn sandwich(&self, v: &[f64]) -> Vec<f64> {
        let d = self.source.len();
        let m = self.eval.len();
        // tmp = W V  (m x d)
        let mut tmp = vec![0.0; m * d];
        for (i, r) in self.rows.iter().enumerate() {
            for (off, w) in r.weights.iter().enumerate() {
                let j = r.start + off;
                let vrow = &v[j * d..(j + 1) * d];
                let trow = &mut tmp[i * d..(i + 1) * d];
                trow.iter_mut().zip(vrow).for_each(|(t, x)| *t += w * x);
            }
        }
        let mut out = vec![0.0; m * m];
        for a in 0..m {
            for (b, r) in self.rows.iter().enumerate() {
                out[a * m + b] =
                    r.weights.iter().zip(&tmp[a * d + r.start..]).map(|(w, t)| w * t).sum();
            }
        }
        out
    }
}

/// Local-linear weights of every eval point with respect to `source`.
///
/// Rows whose local design is degenerate (fewer than two points in the
/// window, or a vanishing determinant) fall back to Nadaraya-Watson weights
/// and are flagged; when no source point lies in the window the window is
/// widened to reach the two nearest design points.
pub fn local_linear_weights(
    source: &TimeGrid,
    eval: &TimeGrid,
    h: f64,
    kernel: Kernel,
) -> Result<SmootherWeightMatrix> {
    if !(h > 0.0 && h.is_finite()) {
        return contract(format!("bandwidth must be positive and finite, got {h}"));
    }
    let rows = eval.points().iter().map(|&t| weight_row(source.points(), t, h, kernel)).collect();
    Ok(SmootherWeightMatrix { source: source.clone(), eval: eval.clone(), bandwidth: h, kernel, rows })
}

fn weight_row(ts: &[f64], t: f64, h: f64, kernel: Kernel) -> WeightRow {
    let (lo, hi) = window(ts, t, h);
    if hi > lo {
        if let Some(weights) = local_linear_row(&ts[lo..hi], t, h, kernel) {
            return WeightRow { start: lo, weights, fallback: false };
        }
        if let Some(weights) = nadaraya_watson_row(&ts[lo..hi], t, h, kernel) {
            return WeightRow { start: lo, weights, fallback: true };
        }
    }
    // empty window: reach the two nearest design points
    let mut by_distance: Vec<usize> = (0..ts.len()).collect();
    by_distance.sort_by(|&a, &b| (ts[a] - t).abs().total_cmp(&(ts[b] - t).abs()).then(a.cmp(&b)));
    let reach = (ts[by_distance[1.min(ts.len() - 1)]] - t).abs() * 1.5;
    let (lo, hi) = window(ts, t, reach);
    let weights = local_linear_row(&ts[lo..hi], t, reach, kernel)
        .or_else(|| nadaraya_watson_row(&ts[lo..hi], t, reach, kernel))
        .unwrap_or_else(|| vec![1.0 / (hi - lo) as f64; hi - lo]);
    WeightRow { start: lo, weights, fallback: true }
}

/// Index range of source points with `|t_j - t| <= h`.
fn window(ts: &[f64], t: f64, h: f64) -> (usize, usize) {
    let lo = ts.partition_point(|&x| x < t - h);
    let hi = ts.partition_point(|&x| x <= t + h);
    (lo, hi.max(lo))
}

fn local_linear_row(ts: &[f64], t: f64, h: f64, kernel: Kernel) -> Option<Vec<f64>> {
    let k: Vec<f64> = ts.iter().map(|&x| kernel_eval(kernel, (x - t) / h)).collect();
    if k.iter().filter(|&&v| v > 0.0).count() < 2 {
        return None;
    }
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut max_sq: f64 = 0.0;
    for (&x, &kj) in ts.iter().zip(&k) {
        let u = x - t;
        s0 += kj;
        s1 += u * kj;
        s2 += u * u * kj;
        if kj > 0.0 {
            max_sq = max_sq.max(u * u);
        }
    }
    let det = s2 * s0 - s1 * s1;
    if !(det > 1e-12 * s0 * max_sq) {
        return None;
    }
    Some(ts.iter().zip(&k).map(|(&x, &kj)| (s2 - (x - t) * s1) * kj / det).collect())
}

fn nadaraya_watson_row(ts: &[f64], t: f64, h: f64, kernel: Kernel) -> Option<Vec<f64>> {
    let k: Vec<f64> = ts.iter().map(|&x| kernel_eval(kernel, (x - t) / h)).collect();
    let total: f64 = k.iter().sum();
    (total > 0.0).then(|| k.iter().map(|v| v / total).collect())
}

/// `X_hat(t) = sum_j W_j(t) y_j` on the smoother's eval grid.
pub fn smooth_curve(obs_row: &[f64], w: &SmootherWeightMatrix) -> Result<Vec<f64>> {
    if obs_row.len() != w.source.len() {
        return contract(format!(
            "smoothing a row of length {} with a {}-point smoother",
            obs_row.len(),
            w.source.len()
        ));
    }
    Ok(w.apply(obs_row))
}

/// Piecewise-linear interpolant through `(t_j, y_j)`, evaluated on `eval`.
pub fn linear_interpolate(obs_row: &[f64], source: &TimeGrid, eval: &TimeGrid) -> Result<Vec<f64>> {
    if obs_row.len() != source.len() {
        return contract(format!(
            "interpolating {} values on a {}-point grid",
            obs_row.len(),
            source.len()
        ));
    }
    let ts = source.points();
    let end = source.end();
    eval.points()
        .iter()
        .map(|&t| {
            if !(0.0..=end).contains(&t) {
                return contract(format!("eval point {t} outside [0, {end}]"));
            }
            let idx = ts.partition_point(|&x| x <= t);
            if idx == 0 {
                return Ok(obs_row[0]);
            }
            let j = idx - 1;
            if j + 1 >= ts.len() || ts[j] == t {
                return Ok(obs_row[j]);
            }
            let frac = (t - ts[j]) / (ts[j + 1] - ts[j]);
            Ok(obs_row[j] + frac * (obs_row[j + 1] - obs_row[j]))
        })
        .collect()
}
