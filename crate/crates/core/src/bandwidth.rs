//! Bandwidth selection by design-weighted leave-one-out cross-validation,
//! and the loss functionals used to judge the estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{InclusionProbabilities, SampleDraw};
use crate::error::{contract, Error, Result};
use crate::estimate::MeanEstimate;
use crate::matrix::CurveMatrix;
use crate::numerics::{trapezoid, TimeGrid};
use crate::population::ObservationMatrix;
use crate::smooth::{local_linear_weights, Kernel, SmootherWeightMatrix};

pub const DEFAULT_GRID_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvVariant {
    /// `w_k = 1/n`, `w~_lk = 1/(n-1)`.
    Unweighted,
    /// `w~_lk = w_l / (1 - w_k)`.
    OpsomerMiller,
    /// Leave-one-out weights that rescale within the left-out unit's stratum.
    StratifiedRescaled,
}

/// Cross-validation weights for the units of one sample, indexed by position
/// in the sample (the row order of the observations).
#[derive(Debug, Clone, PartialEq)]
pub struct CvWeights {
    variant: CvVariant,
    base: Vec<f64>,
    strata: Vec<usize>,
    /// Per stratum: within-stratum leave-one-out weight `(N_g - 1) / ((N - 1)(n_g - 1))`.
    within: Vec<f64>,
    /// `N / (N - 1)`.
    outside_scale: f64,
}

impl CvWeights {
    pub fn unweighted(n: usize) -> Result<Self> {
        if n < 2 {
            return contract("cross-validation needs at least two sampled units");
        }
        Ok(Self {
            variant: CvVariant::Unweighted,
            base: vec![1.0 / n as f64; n],
            strata: vec![0; n],
            within: vec![1.0 / (n - 1) as f64],
            outside_scale: 0.0,
        })
    }

    /// `w_k = (N pi_k)^{-1}` with `w~_lk = w_l / (1 - w_k)`.
    pub fn opsomer_miller(draw: &SampleDraw, probs: &InclusionProbabilities) -> Result<Self> {
        if draw.len() < 2 {
            return contract("cross-validation needs at least two sampled units");
        }
        let base = design_weights(draw, probs);
        if base.iter().any(|w| *w >= 1.0) {
            return Err(Error::Design("a design weight of one leaves nothing to cross-validate".into()));
        }
        Ok(Self {
            variant: CvVariant::OpsomerMiller,
            base,
            strata: draw.units().iter().map(|&k| probs.stratum(k)).collect(),
            within: Vec::new(),
            outside_scale: 0.0,
        })
    }

    pub fn variant(&self) -> CvVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// `w_k` of the unit at sample position `k`.
    pub fn base(&self, k: usize) -> f64 {
        self.base[k]
    }

    /// `w~_lk`: weight of position `l` in the mean that leaves out position `k`.
    pub fn loo(&self, l: usize, k: usize) -> f64 {
        if l == k {
            return 0.0;
        }
        match self.variant {
            CvVariant::Unweighted => self.within[0],
            CvVariant::OpsomerMiller => self.base[l] / (1.0 - self.base[k]),
            CvVariant::StratifiedRescaled => {
                if self.strata[l] == self.strata[k] {
                    self.within[self.strata[k]]
                } else {
                    self.outside_scale * self.base[l]
                }
            }
        }
    }

    /// Leave-one-out means of all positions from the smoothed curves, using
    /// aggregate sums so the cost is linear in the sample size.
    fn loo_means(&self, smoothed: &CurveMatrix) -> CurveMatrix {
        let (n, d) = (smoothed.rows(), smoothed.cols());
        let h = self.strata.iter().max().map_or(1, |g| g + 1);
        let mut plain = vec![vec![0.0; d]; h];
        let mut weighted = vec![vec![0.0; d]; h];
        for (k, row) in smoothed.iter_rows().enumerate() {
            let g = self.strata[k];
            for j in 0..d {
                plain[g][j] += row[j];
                weighted[g][j] += self.base[k] * row[j];
            }
        }
        let total_plain: Vec<f64> = (0..d).map(|j| plain.iter().map(|s| s[j]).sum()).collect();
        let total_weighted: Vec<f64> = (0..d).map(|j| weighted.iter().map(|s| s[j]).sum()).collect();
        let mut out = CurveMatrix::zeros(n, d);
        for (k, row) in smoothed.iter_rows().enumerate() {
            let g = self.strata[k];
            let target = out.row_mut(k);
            match self.variant {
                CvVariant::Unweighted => {
                    let a = self.within[0];
                    for j in 0..d {
                        target[j] = a * (total_plain[j] - row[j]);
                    }
                }
                CvVariant::OpsomerMiller => {
                    let wk = self.base[k];
                    for j in 0..d {
                        target[j] = (total_weighted[j] - wk * row[j]) / (1.0 - wk);
                    }
                }
                CvVariant::StratifiedRescaled => {
                    let a = self.within[g];
                    let c = self.outside_scale;
                    for j in 0..d {
                        target[j] = a * (plain[g][j] - row[j]) + c * (total_weighted[j] - weighted[g][j]);
                    }
                }
            }
        }
        out
    }
}

fn design_weights(draw: &SampleDraw, probs: &InclusionProbabilities) -> Vec<f64> {
    let big_n = probs.population_size() as f64;
    draw.units().iter().map(|&k| probs.inverse_pi(k) / big_n).collect()
}

/// Leave-one-out weights that preserve the design-based form of the mean:
/// `(N_g - 1) / ((N - 1)(n_g - 1))` for other units of the left-out unit's
/// stratum `g` and `N (N - 1)^{-1} w_l` for units of other strata.
pub fn stratified_loo_weights(draw: &SampleDraw, probs: &InclusionProbabilities) -> Result<CvWeights> {
    if draw.len() < 2 {
        return contract("cross-validation needs at least two sampled units");
    }
    let big_n = probs.population_size();
    let strata: Vec<usize> = draw.units().iter().map(|&k| probs.stratum(k)).collect();
    let mut counts = vec![0usize; probs.stratum_count()];
    strata.iter().for_each(|&g| counts[g] += 1);
    let mut within = vec![0.0; probs.stratum_count()];
    for (g, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        if count < 2 {
            return Err(Error::Design(format!(
                "stratum {g} has a single sampled unit; stratified leave-one-out weights need at least two"
            )));
        }
        let (big_g, _) = probs.stratum_sizes(g);
        within[g] = (big_g - 1) as f64 / ((big_n - 1) as f64 * (count - 1) as f64);
    }
    Ok(CvWeights {
        variant: CvVariant::StratifiedRescaled,
        base: design_weights(draw, probs),
        strata,
        within,
        outside_scale: big_n as f64 / (big_n - 1) as f64,
    })
}

/// Candidate bandwidths, strictly increasing and positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandwidthGrid {
    values: Vec<f64>,
}

impl BandwidthGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return contract("bandwidth grid is empty");
        }
        if values.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return contract("bandwidths must be positive and finite");
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return contract("bandwidths must be strictly increasing");
        }
        Ok(Self { values })
    }

    /// `count` log-spaced values from `lo` to `hi`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 1 {
            return Self::new(vec![lo]);
        }
        if !(lo > 0.0 && hi > lo) {
            return contract(format!("invalid bandwidth range [{lo}, {hi}]"));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
        values[0] = lo;
        values[count - 1] = hi;
        Self::new(values)
    }

    /// 20 log-spaced values from twice the largest grid spacing to `T/4`.
    pub fn default_for(grid: &TimeGrid) -> Result<Self> {
        Self::log_spaced(2.0 * grid.max_spacing(), grid.end() / 4.0, DEFAULT_GRID_SIZE)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<Vec<f64>> for BandwidthGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BandwidthGrid> for Vec<f64> {
    fn from(g: BandwidthGrid) -> Self {
        g.values
    }
}

/// One smoother per candidate bandwidth, built once and shared read-only.
#[derive(Debug, Clone)]
pub struct SmootherBank {
    bandwidths: BandwidthGrid,
    smoothers: Vec<SmootherWeightMatrix>,
}

impl SmootherBank {
    pub fn new(grid: &TimeGrid, bandwidths: BandwidthGrid, kernel: Kernel) -> Result<Self> {
        let smoothers = bandwidths
            .values()
            .par_iter()
            .map(|&h| local_linear_weights(grid, grid, h, kernel))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bandwidths, smoothers })
    }

    pub fn bandwidths(&self) -> &BandwidthGrid {
        &self.bandwidths
    }

    pub fn smoothers(&self) -> &[SmootherWeightMatrix] {
        &self.smoothers
    }

    pub fn smoother(&self, i: usize) -> &SmootherWeightMatrix {
        &self.smoothers[i]
    }

    pub fn len(&self) -> usize {
        self.smoothers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothers.is_empty()
    }
}

fn check_weights(obs: &ObservationMatrix, weights: &CvWeights, w: &SmootherWeightMatrix) -> Result<()> {
    if obs.len() != weights.len() {
        return contract(format!("{} observed rows but {} cross-validation weights", obs.len(), weights.len()));
    }
    if obs.len() < 2 {
        return contract("cross-validation needs at least two sampled units");
    }
    if w.source_grid() != obs.grid() || w.eval_grid() != obs.grid() {
        return contract("smoother must map the observation grid onto itself");
    }
    Ok(())
}

/// `mu_hat^{-k}(t_j) = sum_{l != k} w~_lk X_hat_l(t_j)` at bandwidth `w.bandwidth()`.
pub fn loo_mean(w: &SmootherWeightMatrix, obs: &ObservationMatrix, weights: &CvWeights, k: usize) -> Result<Vec<f64>> {
    check_weights(obs, weights, w)?;
    if k >= obs.len() {
        return contract(format!("position {k} outside a sample of {}", obs.len()));
    }
    let d = obs.grid().len();
    let mut out = vec![0.0; d];
    for (l, row) in obs.values().iter_rows().enumerate() {
        if l == k {
            continue;
        }
        let a = weights.loo(l, k);
        let smoothed = w.apply(row);
        out.iter_mut().zip(&smoothed).for_each(|(o, x)| *o += a * x);
    }
    Ok(out)
}

/// `WCV(h) = sum_k w_k sum_j (Y_jk - mu_hat^{-k}(t_j))^2`.
pub fn wcv_score(w: &SmootherWeightMatrix, obs: &ObservationMatrix, weights: &CvWeights) -> Result<f64> {
    check_weights(obs, weights, w)?;
    let smoothed = w.smooth_rows(obs.values())?;
    Ok(score_from_smoothed(obs, &smoothed, weights))
}

pub(crate) fn score_from_smoothed(obs: &ObservationMatrix, smoothed: &CurveMatrix, weights: &CvWeights) -> f64 {
    let loo = weights.loo_means(smoothed);
    obs.values()
        .iter_rows()
        .zip(loo.iter_rows())
        .enumerate()
        .map(|(k, (y, m))| weights.base(k) * y.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: f64,
    pub index: usize,
    /// `(h, WCV(h))` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Minimizer of `WCV(h)` over the bank; ties go to the smaller bandwidth.
pub fn select_bandwidth(bank: &SmootherBank, obs: &ObservationMatrix, weights: &CvWeights) -> Result<BandwidthSelection> {
    let scores = bank
        .smoothers()
        .iter()
        .map(|w| Ok((w.bandwidth(), wcv_score(w, obs, weights)?)))
        .collect::<Result<Vec<_>>>()?;
    let index = argmin(scores.iter().map(|s| s.1))
        .ok_or_else(|| Error::Numerical("every cross-validation score is non-finite".into()))?;
    Ok(BandwidthSelection { bandwidth: scores[index].0, index, scores })
}

/// First index of the smallest finite value.
pub(crate) fn argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// `L(mu_hat) = int (mu_hat - mu_hat_s)^2 dt` against the estimator built from the true curves.
pub fn oracle_loss(est: &MeanEstimate, oracle: &MeanEstimate) -> Result<f64> {
    if est.grid() != oracle.grid() {
        return contract("estimates live on different grids");
    }
    squared_distance(est.values(), oracle.values(), est.grid())
}

/// `R(mu_hat) = int (mu_hat - mu_N)^2 dt`.
pub fn r_loss(est: &MeanEstimate, truth: &[f64]) -> Result<f64> {
    squared_distance(est.values(), truth, est.grid())
}

fn squared_distance(a: &[f64], b: &[f64], grid: &TimeGrid) -> Result<f64> {
    if a.len() != b.len() {
        return contract(format!("curves of lengths {} and {}", a.len(), b.len()));
    }
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    trapezoid(&sq, grid)
}
