//! Simultaneous confidence bands from Gaussian simulation conditional on the
//! estimated covariance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::estimate::{variance_curve, CovarianceEstimate, MeanEstimate};
use crate::numerics::{empirical_quantile, standard_normals, sym_eig, trapezoid, RngStream, SymmetricMatrix, TimeGrid};

pub const DEFAULT_REPLICATES: usize = 10_000;
/// Grid points with `sigma_hat < SIGMA_FLOOR * max sigma_hat` are left out of the supremum.
pub const SIGMA_FLOOR: f64 = 1e-12;
const CHUNK: usize = 256;
const THRESHOLD_MANTISSA_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClipDiagnostics {
    pub clipped_eigenvalues: usize,
    /// `sum |lambda_-| / sum |lambda|`.
    pub clipped_mass: f64,
    pub most_negative: f64,
}

/// `L` with `L L^T` the eigen-clipped projection of a symmetric matrix onto
/// the PSD cone. Only columns with a positive eigenvalue are kept, in
/// descending eigenvalue order.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    order: usize,
    rank: usize,
    /// Row-major `order x rank`.
    factor: Vec<f64>,
    pub diagnostics: ClipDiagnostics,
}

impl PsdFactor {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn get(&self, i: usize, r: usize) -> f64 {
        self.factor[i * self.rank + r]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.factor[i * self.rank..(i + 1) * self.rank]
    }

    pub fn gram(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(self.order, |i, j| {
            self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
        })
    }

    /// `L z` for a standard normal `z` of length `rank`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.factor.chunks_exact(self.rank.max(1))) {
            *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }
}

pub fn psd_project(a: &SymmetricMatrix) -> Result<PsdFactor> {
    let eig = sym_eig(a)?;
    let n = eig.order;
    let total: f64 = eig.values.iter().map(|v| v.abs()).sum();
    let negative: Vec<f64> = eig.values.iter().copied().filter(|v| *v < 0.0).collect();
    let neg_mass = negative.iter().fold(0.0, |acc, v| acc - v);
    let diagnostics = ClipDiagnostics {
        clipped_eigenvalues: negative.len(),
        clipped_mass: if total > 0.0 { neg_mass / total } else { 0.0 },
        most_negative: negative.iter().copied().fold(0.0, f64::min),
    };
    // eigenvalues this small are rounding noise whose sign depends on the scale of `a`
    let tol = n as f64 * f64::EPSILON * eig.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let kept: Vec<usize> = (0..n).filter(|&i| eig.values[i] > tol).collect();
    let rank = kept.len();
    let mut factor = vec![0.0; n * rank];
    for i in 0..n {
        for (r, &c) in kept.iter().enumerate() {
            factor[i * rank + r] = eig.vector_component(i, c) * eig.values[c].sqrt();
        }
    }
    Ok(PsdFactor { order: n, rank, factor, diagnostics })
}

/// Factor of the correlation matrix of `cov` on the points where the standard
/// deviation is not negligible, together with those points.
fn correlation_factor(cov: &CovarianceEstimate) -> Result<(PsdFactor, Vec<usize>)> {
    let sd = variance_curve(cov).values;
    let max = sd.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::Numerical("estimated standard deviation is zero on the whole grid".into()));
    }
    let kept: Vec<usize> = (0..sd.len()).filter(|&j| sd[j] >= SIGMA_FLOOR * max).collect();
    let m = cov.matrix();
    let corr = SymmetricMatrix::from_fn(kept.len(), |a, b| {
        let (i, j) = (kept[a], kept[b]);
        m.get(i, j) / (sd[i] * sd[j])
    });
    Ok((psd_project(&corr)?, kept))
}

fn sup_ratios_from_factor(factor: &PsdFactor, b: usize, stream: &RngStream) -> Vec<f64> {
    let chunks = b.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(b - c * CHUNK);
            // one normal per eigen-direction, used or not, so the paths do not depend on the rank
            let n = factor.order();
            let z = standard_normals(&stream.substream(c as u64), len * n);
            let mut g = vec![0.0; n];
            (0..len)
                .map(|r| {
                    factor.apply(&z[r * n..r * n + factor.rank()], &mut g);
                    g.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
                })
                .collect()
        })
        .collect();
    per_chunk.concat()
}

/// `B` draws of `max_j |G(t_j)| / sigma_hat(t_j)` with `G ~ N(0, gamma_hat^+)`.
///
/// The simulation runs on the correlation scale, which is the same ratio and
/// makes the result independent of the overall scale of `cov`.
pub fn simulate_sup_ratios(cov: &CovarianceEstimate, b: usize, stream: &RngStream) -> Result<Vec<f64>> {
    if b == 0 {
        return contract("at least one simulated path is required");
    }
    let (factor, _) = correlation_factor(cov)?;
    Ok(sup_ratios_from_factor(&factor, b, stream))
}

/// Rounds to `THRESHOLD_MANTISSA_BITS` significant bits, so that thresholds
/// computed from covariances differing only by a scale factor agree exactly.
fn snap(c: f64) -> f64 {
    if !c.is_finite() || c == 0.0 {
        return c;
    }
    let shift = 52 - (THRESHOLD_MANTISSA_BITS - 1);
    let bits = c.to_bits();
    let half = 1u64 << (shift - 1);
    f64::from_bits((bits + half) & !((1u64 << shift) - 1))
}

/// `(1 - alpha)` empirical quantile of the simulated ratios.
pub fn band_threshold(sup_ratios: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return contract(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    empirical_quantile(sup_ratios, 1.0 - alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub grid: TimeGrid,
    pub center: Vec<f64>,
    /// `c sigma_hat(t) / sqrt(N)`.
    pub halfwidth: Vec<f64>,
    pub threshold: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub population_size: usize,
    pub diagnostics: ClipDiagnostics,
    /// Grid points whose estimated variance was negative and clipped to zero.
    pub negative_variances: usize,
}

impl ConfidenceBand {
    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().zip(&self.halfwidth).map(|(c, h)| c - h).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().zip(&self.halfwidth).map(|(c, h)| c + h).collect()
    }
}

/// `[mu_hat(t) +- c sigma_hat(t) / sqrt(N)]`.
pub fn build_band(
    mean: &MeanEstimate,
    cov: &CovarianceEstimate,
    alpha: f64,
    b: usize,
    stream: &RngStream,
) -> Result<ConfidenceBand> {
    if mean.grid() != cov.grid() {
        return contract("mean and covariance live on different grids");
    }
    if b == 0 {
        return contract("at least one simulated path is required");
    }
    let sd = variance_curve(cov);
    let (factor, _) = correlation_factor(cov)?;
    let ratios = sup_ratios_from_factor(&factor, b, stream);
    let c = snap(band_threshold(&ratios, alpha)?);
    let root_n = (cov.population_size() as f64).sqrt();
    Ok(ConfidenceBand {
        grid: mean.grid().clone(),
        center: mean.values().to_vec(),
        halfwidth: sd.values.iter().map(|s| c * s / root_n).collect(),
        threshold: c,
        alpha,
        replicates: b,
        population_size: cov.population_size(),
        diagnostics: factor.diagnostics,
        negative_variances: sd.clipped.len(),
    })
}

/// Area in the reporting convention `int 2 c sigma_hat(t) dt`.
pub fn band_area(band: &ConfidenceBand) -> f64 {
    band_area_absolute(band) * (band.population_size as f64).sqrt()
}

/// Literal area between the band's edges, `int 2 c sigma_hat(t) / sqrt(N) dt`.
pub fn band_area_absolute(band: &ConfidenceBand) -> f64 {
    let widths: Vec<f64> = band.halfwidth.iter().map(|h| 2.0 * h).collect();
    trapezoid(&widths, &band.grid).expect("band vectors match the grid")
}

/// Whether `truth` lies inside the band at every grid point.
pub fn covers(band: &ConfidenceBand, truth: &[f64]) -> Result<bool> {
    if truth.len() != band.center.len() {
        return contract(format!("truth of length {} for a {}-point band", truth.len(), band.center.len()));
    }
    Ok(band
        .center
        .iter()
        .zip(&band.halfwidth)
        .zip(truth)
        .all(|((c, h), t)| (t - c).abs() <= *h))
}
