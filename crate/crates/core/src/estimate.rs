//! Horvitz-Thompson estimation of the mean curve and of its covariance.

use serde::{Deserialize, Serialize};

use crate::design::{InclusionProbabilities, SampleDraw};
use crate::error::{contract, Result};
use crate::matrix::CurveMatrix;
use crate::numerics::{SymmetricMatrix, TimeGrid};
use crate::smooth::SmootherWeightMatrix;

/// How the sampled curves were reconstructed before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSource {
    Smoothed { bandwidth: f64 },
    Interpolated,
    /// Noise-free curves, available in simulations only.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    grid: TimeGrid,
    values: Vec<f64>,
    pub source: Option<CurveSource>,
    pub sample_size: usize,
}

impl MeanEstimate {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return contract(format!("{} mean values for a {}-point grid", values.len(), grid.len()));
        }
        Ok(Self { grid, values, source: None, sample_size: 0 })
    }

    pub fn with_source(mut self, source: CurveSource) -> Self {
        self.source = Some(source);
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    grid: TimeGrid,
    matrix: SymmetricMatrix,
    population_size: usize,
    pub source: Option<CurveSource>,
}

impl CovarianceEstimate {
    pub fn new(grid: TimeGrid, matrix: SymmetricMatrix, population_size: usize) -> Result<Self> {
        if matrix.order() != grid.len() {
            return contract(format!(
                "covariance of order {} for a {}-point grid",
                matrix.order(),
                grid.len()
            ));
        }
        Ok(Self { grid, matrix, population_size, source: None })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    /// `N`, the scale of the band half-widths.
    pub fn population_size(&self) -> usize {
        self.population_size
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: self.matrix.scaled(factor), ..self.clone() }
    }
}

fn check_sample(smoothed: &CurveMatrix, grid: &TimeGrid, draw: &SampleDraw, probs: &InclusionProbabilities) -> Result<()> {
    if smoothed.rows() != draw.len() {
        return contract(format!("{} curves for a sample of {} units", smoothed.rows(), draw.len()));
    }
    if smoothed.cols() != grid.len() {
        return contract(format!("curves of length {} on a {}-point grid", smoothed.cols(), grid.len()));
    }
    if draw.population_size() != probs.population_size() {
        return contract("sample and inclusion probabilities refer to different populations");
    }
    Ok(())
}

/// `mu_hat(t_j) = N^{-1} sum_{k in s} X_hat_k(t_j) / pi_k`; rows of
/// `smoothed` follow the order of `draw.units()`.
pub fn ht_mean(
    grid: &TimeGrid,
    smoothed: &CurveMatrix,
    draw: &SampleDraw,
    probs: &InclusionProbabilities,
) -> Result<MeanEstimate> {
    check_sample(smoothed, grid, draw, probs)?;
    let mut acc = vec![0.0; grid.len()];
    for (row, &k) in smoothed.iter_rows().zip(draw.units()) {
        let w = probs.inverse_pi(k);
        acc.iter_mut().zip(row).for_each(|(a, x)| *a += w * x);
    }
    let big_n = probs.population_size() as f64;
    acc.iter_mut().for_each(|a| *a /= big_n);
    Ok(MeanEstimate { grid: grid.clone(), values: acc, source: None, sample_size: draw.len() })
}

/// Accumulates `sum_g a_g S_g S_g^T + sum_k c_k x_k x_k^T` into a dense matrix.
struct OuterAccumulator {
    d: usize,
    dense: Vec<f64>,
}

impl OuterAccumulator {
    fn new(d: usize) -> Self {
        Self { d, dense: vec![0.0; d * d] }
    }

    fn add_outer(&mut self, coef: f64, x: &[f64]) {
        if coef == 0.0 {
            return;
        }
        let d = self.d;
        for i in 0..d {
            let ci = coef * x[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut self.dense[i * d..i * d + i + 1];
            row.iter_mut().zip(&x[..=i]).for_each(|(r, xj)| *r += ci * xj);
        }
    }

    fn finish(self, scale: f64) -> SymmetricMatrix {
        let d = self.d;
        SymmetricMatrix::from_fn(d, |i, j| self.dense[i * d + j] * scale)
    }
}

/// Horvitz-Thompson covariance estimator
/// `N^{-1} sum_{k,l in s} Delta_kl / pi_kl * X_hat_k(s) X_hat_l(t) / (pi_k pi_l)`.
///
/// Under stratified SRSWOR the coefficient takes one value for distinct units
/// of the same stratum, one value on the diagonal and vanishes across strata,
/// so the double sum collapses to per-stratum outer products of curve sums
/// plus a diagonal correction.
pub fn ht_covariance(
    grid: &TimeGrid,
    smoothed: &CurveMatrix,
    draw: &SampleDraw,
    probs: &InclusionProbabilities,
) -> Result<CovarianceEstimate> {
    check_sample(smoothed, grid, draw, probs)?;
    let d = grid.len();
    let h = probs.stratum_count();
    let mut sums = vec![vec![0.0; d]; h];
    let mut acc = OuterAccumulator::new(d);
    for (row, &k) in smoothed.iter_rows().zip(draw.units()) {
        let g = probs.stratum(k);
        let (off, diag) = probs.ht_covariance_coefficients(g);
        acc.add_outer(diag - off.unwrap_or(0.0), row);
        sums[g].iter_mut().zip(row).for_each(|(s, x)| *s += x);
    }
    for (g, s) in sums.iter().enumerate() {
        if let (Some(off), _) = probs.ht_covariance_coefficients(g) {
            acc.add_outer(off, s);
        }
    }
    let big_n = probs.population_size();
    let matrix = acc.finish(1.0 / big_n as f64);
    Ok(CovarianceEstimate { grid: grid.clone(), matrix, population_size: big_n, source: None })
}

/// Design covariance `gamma_N` of `sqrt(N) mu_hat`:
/// `N^{-1} sum_{k,l in U} Delta_kl X_k(s) X_l(t) / (pi_k pi_l)` plus
/// `N^{-1} sum_k pi_k^{-1} E(e_k(s) e_k(t))` when the error second moment of
/// the reconstructed curves is supplied.
pub fn exact_gamma(
    smoothed_population: &CurveMatrix,
    probs: &InclusionProbabilities,
    noise_second_moment: Option<&SymmetricMatrix>,
) -> Result<SymmetricMatrix> {
    let big_n = smoothed_population.rows();
    if big_n != probs.population_size() {
        return contract(format!(
            "{} population curves for inclusion probabilities over {} units",
            big_n,
            probs.population_size()
        ));
    }
    let d = smoothed_population.cols();
    let h = probs.stratum_count();
    let mut totals = vec![vec![0.0; d]; h];
    let mut acc = OuterAccumulator::new(d);
    let mut inv_pi_sum = 0.0;
    let coef = |g: usize| {
        let (big, small) = probs.stratum_sizes(g);
        let (big, small) = (big as f64, small as f64);
        let pi = small / big;
        let inv2 = (big / small) * (big / small);
        let pair = if big > 1.0 { small * (small - 1.0) / (big * (big - 1.0)) } else { 0.0 };
        ((pair - pi * pi) * inv2, pi * (1.0 - pi) * inv2)
    };
    for (k, row) in smoothed_population.iter_rows().enumerate() {
        let g = probs.stratum(k);
        let (off, diag) = coef(g);
        acc.add_outer(diag - off, row);
        totals[g].iter_mut().zip(row).for_each(|(s, x)| *s += x);
        inv_pi_sum += probs.inverse_pi(k);
    }
    for (g, t) in totals.iter().enumerate() {
        acc.add_outer(coef(g).0, t);
    }
    let mut gamma = acc.finish(1.0 / big_n as f64);
    if let Some(e) = noise_second_moment {
        if e.order() != d {
            return contract(format!("noise second moment of order {} for {d} grid points", e.order()));
        }
        let w = inv_pi_sum / big_n as f64;
        for i in 0..d {
            for j in 0..=i {
                gamma.add(i, j, w * e.get(i, j));
            }
        }
    }
    Ok(gamma)
}

/// Second moment `W(s)^T V W(t)` of smoothed errors with raw covariance `v`.
pub fn smoothed_error_covariance(w: &SmootherWeightMatrix, v: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    if v.order() != w.source_grid().len() {
        return contract("error covariance does not match the smoother's source grid");
    }
    let m = w.eval_grid().len();
    let dense = w.sandwich(&v.to_dense());
    SymmetricMatrix::from_dense(m, &dense, 1e-9)
}

/// `sigma_hat(t) = max(gamma_hat(t,t), 0)^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StdDevCurve {
    pub values: Vec<f64>,
    /// Grid indices where a negative variance was clipped to zero.
    pub clipped: Vec<usize>,
}

pub fn variance_curve(cov: &CovarianceEstimate) -> StdDevCurve {
    let diag = cov.matrix.diagonal();
    let clipped = diag.iter().enumerate().filter(|(_, v)| **v < 0.0).map(|(i, _)| i).collect();
    StdDevCurve { values: diag.iter().map(|v| v.max(0.0).sqrt()).collect(), clipped }
}
