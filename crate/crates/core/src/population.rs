//! Finite populations of discretized curves and their noisy observation.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::matrix::CurveMatrix;
use crate::numerics::{solve_dense, trapezoid, RngStream, SymmetricMatrix, TimeGrid};
use crate::smooth::linear_interpolate;

/// AR(3) coefficients used in the reference simulation study.
pub const DEFAULT_AR3: [f64; 3] = [0.89, 0.3, -0.4];

/// Burn-in length for AR(3) noise paths started from a zero state.
pub const AR3_BURN_IN: usize = 1000;

/// Tolerance on the Gram matrix of the mode basis.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// A curve on `[0, T]`, either from the built-in family or tabulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSpec {
    /// Smooth daily-load profile: base level, trend, morning and evening peaks.
    BuiltinMean,
    /// Pre-orthonormalization seed function `index` (0, 1 or 2) of the built-in modes.
    BuiltinModeSeed { index: usize },
    /// Values at `times`, linearly interpolated onto the population grid.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

fn bump(t: f64, center: f64, width: f64) -> f64 {
    (-((t - center) / width).powi(2)).exp()
}

impl CurveSpec {
    pub fn evaluate(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let end = grid.end();
        match self {
            CurveSpec::BuiltinMean => Ok(grid
                .points()
                .iter()
                .map(|&t| {
                    let u = t / end;
                    150.0 + 30.0 * u + 40.0 * bump(u, 0.3, 0.07) + 56.0 * bump(u, 0.75, 0.07)
                        - 16.0 * bump(u, 0.55, 0.105)
                })
                .collect()),
            CurveSpec::BuiltinModeSeed { index } => {
                let f: fn(f64) -> f64 = match index {
                    // level plus sharp peak spikes: the unit-to-unit spread concentrates at the peaks
                    0 => |u| 0.1 + bump(u, 0.75, 0.02) + 0.6 * bump(u, 0.3, 0.02),
                    1 => |u| (2.0 * std::f64::consts::PI * u).sin(),
                    2 => |u| (4.0 * std::f64::consts::PI * u).sin(),
                    _ => return config(format!("no built-in mode seed {index}")),
                };
                Ok(grid.points().iter().map(|&t| f(t / end)).collect())
            }
            CurveSpec::Tabulated { times, values } => {
                if times.len() != values.len() {
                    return config(format!(
                        "tabulated curve has {} times and {} values",
                        times.len(),
                        values.len()
                    ));
                }
                let source = TimeGrid::new(times.clone())
                    .map_err(|e| Error::Config(format!("tabulated curve times: {e}")))?;
                if (source.end() - end).abs() > 1e-9 * end {
                    return config(format!(
                        "tabulated curve ends at {}, population grid at {end}",
                        source.end()
                    ));
                }
                let mut eval = grid.clone();
                if source.end() < end {
                    // clamp the last point onto the table's end
                    let mut pts = grid.points().to_vec();
                    *pts.last_mut().unwrap() = source.end();
                    eval = TimeGrid::new(pts)?;
                }
                linear_interpolate(values, &source, &eval)
            }
        }
    }
}

/// One mode of variation: a basis curve and the variance of its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub curve: CurveSpec,
    pub variance: f64,
}

/// Parameters of a synthetic population `X_k = mu + sum_l Z_kl v_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub size: usize,
    pub grid: TimeGrid,
    pub mean: CurveSpec,
    pub modes: Vec<ModeSpec>,
    /// Gram-Schmidt the evaluated modes before use. When false the modes must
    /// already be orthonormal under the trapezoid inner product.
    #[serde(default)]
    pub orthonormalize: bool,
    pub seed: u64,
}

/// Score standard deviations of the built-in modes.
pub const BUILTIN_MODE_SD: [f64; 3] = [45.0, 5.0, 3.0];

impl PopulationConfig {
    /// Built-in load-curve-like family with three orthonormalized modes.
    pub fn builtin(size: usize, grid: TimeGrid, seed: u64) -> Self {
        let modes = BUILTIN_MODE_SD
            .iter()
            .enumerate()
            .map(|(index, sd)| ModeSpec {
                curve: CurveSpec::BuiltinModeSeed { index },
                variance: sd * sd,
            })
            .collect();
        Self { size, grid, mean: CurveSpec::BuiltinMean, modes, orthonormalize: true, seed }
    }

    pub fn mean_curve(&self) -> Result<Vec<f64>> {
        self.mean.evaluate(&self.grid)
    }

    /// Evaluated basis curves, orthonormalized if requested and then checked.
    pub fn basis(&self) -> Result<Vec<Vec<f64>>> {
        let mut raw = self
            .modes
            .iter()
            .map(|m| m.curve.evaluate(&self.grid))
            .collect::<Result<Vec<_>>>()?;
        if self.orthonormalize {
            raw = gram_schmidt(raw, &self.grid)?;
        }
        check_orthonormal(&raw, &self.grid)?;
        Ok(raw)
    }

    fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return config(format!("population size must be at least 2, got {}", self.size));
        }
        if let Some(m) = self.modes.iter().find(|m| !(m.variance >= 0.0 && m.variance.is_finite())) {
            return config(format!("mode variance must be finite and >= 0, got {}", m.variance));
        }
        Ok(())
    }

    /// `sum_l sigma_l^2 v_l(s) v_l(t)` on the grid.
    pub fn model_covariance(&self) -> Result<SymmetricMatrix> {
        let basis = self.basis()?;
        let d = self.grid.len();
        Ok(SymmetricMatrix::from_fn(d, |i, j| {
            self.modes.iter().zip(&basis).map(|(m, v)| m.variance * v[i] * v[j]).sum()
        }))
    }
}

/// Orthonormalize curves under the trapezoid inner product on `grid`.
pub fn gram_schmidt(curves: Vec<Vec<f64>>, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    let inner = |a: &[f64], b: &[f64]| -> Result<f64> {
        let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        trapezoid(&prod, grid)
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(curves.len());
    for (idx, mut c) in curves.into_iter().enumerate() {
        let initial = inner(&c, &c)?.sqrt();
        // two passes for stability
        for _ in 0..2 {
            for q in &out {
                let proj = inner(&c, q)?;
                c.iter_mut().zip(q).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = inner(&c, &c)?.sqrt();
        if !(norm > 1e-10 * initial.max(f64::MIN_POSITIVE)) {
            return config(format!("mode {idx} is linearly dependent on the previous modes"));
        }
        c.iter_mut().for_each(|x| *x /= norm);
        out.push(c);
    }
    Ok(out)
}

fn check_orthonormal(basis: &[Vec<f64>], grid: &TimeGrid) -> Result<()> {
    for (i, a) in basis.iter().enumerate() {
        if a.len() != grid.len() {
            return config(format!("mode {i} has {} values for {} grid points", a.len(), grid.len()));
        }
        for (j, b) in basis.iter().enumerate().take(i + 1) {
            let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            let g = trapezoid(&prod, grid)?;
            let target = if i == j { 1.0 } else { 0.0 };
            if (g - target).abs() > ORTHONORMAL_TOL {
                return config(format!(
                    "mode basis not orthonormal: <v{i}, v{j}> = {g:.3e}, expected {target}"
                ));
            }
        }
    }
    Ok(())
}

/// `N` true trajectories on a common grid.
#[derive(Debug, Clone)]
pub struct CurvePopulation {
    grid: TimeGrid,
    curves: CurveMatrix,
    variance: OnceLock<Vec<f64>>,
}

impl CurvePopulation {
    pub fn new(grid: TimeGrid, curves: CurveMatrix) -> Result<Self> {
        if curves.cols() != grid.len() {
            return contract(format!(
                "population has {} columns for a grid of {} points",
                curves.cols(),
                grid.len()
            ));
        }
        if curves.rows() == 0 {
            return contract("population has no curves");
        }
        if !curves.is_finite() {
            return contract("population has non-finite values");
        }
        Ok(Self { grid, curves, variance: OnceLock::new() })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn curves(&self) -> &CurveMatrix {
        &self.curves
    }

    /// Population size `N`.
    pub fn len(&self) -> usize {
        self.curves.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.rows() == 0
    }

    pub fn curve(&self, k: usize) -> &[f64] {
        self.curves.row(k)
    }

    /// Cached per-time population variance, see [`population_variance_at`].
    pub fn variance_curve(&self) -> Result<&[f64]> {
        if let Some(v) = self.variance.get() {
            return Ok(v);
        }
        let v = population_variance_at(self)?;
        Ok(self.variance.get_or_init(|| v))
    }

    /// `int_0^T X_k(t) dt` for every unit.
    pub fn totals(&self) -> Result<Vec<f64>> {
        self.curves.iter_rows().map(|r| trapezoid(r, &self.grid)).collect()
    }
}

/// Draw `X_k(t_j) = mu(t_j) + sum_l Z_kl v_l(t_j)` with independent
/// `Z_kl ~ N(0, sigma_l^2)`.
pub fn synthesize_population(config: &PopulationConfig) -> Result<CurvePopulation> {
    config.validate()?;
    let mu = config.mean_curve()?;
    let basis = config.basis()?;
    let d = config.grid.len();
    let sds: Vec<f64> = config.modes.iter().map(|m| m.variance.sqrt()).collect();
    let mut rng = RngStream::new(config.seed, 0).rng();
    let mut curves = CurveMatrix::zeros(config.size, d);
    for k in 0..config.size {
        let row = curves.row_mut(k);
        row.copy_from_slice(&mu);
        for (v, sd) in basis.iter().zip(&sds) {
            let z: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            row.iter_mut().zip(v).for_each(|(x, b)| *x += z * b);
        }
    }
    CurvePopulation::new(config.grid.clone(), curves)
}

/// `mu_N(t_j) = N^{-1} sum_k X_k(t_j)`.
pub fn population_mean(pop: &CurvePopulation) -> Vec<f64> {
    let d = pop.grid.len();
    let mut acc = vec![0.0; d];
    for row in pop.curves.iter_rows() {
        acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
    }
    let n = pop.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Unbiased per-time variance across the population (divisor `N - 1`).
pub fn population_variance_at(pop: &CurvePopulation) -> Result<Vec<f64>> {
    let n = pop.len();
    if n < 2 {
        return contract("population variance needs at least 2 curves");
    }
    let mean = population_mean(pop);
    let mut acc = vec![0.0; mean.len()];
    for row in pop.curves.iter_rows() {
        for ((a, x), m) in acc.iter_mut().zip(row).zip(&mean) {
            *a += (x - m) * (x - m);
        }
    }
    acc.iter_mut().for_each(|a| *a /= (n - 1) as f64);
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Independent `N(0, v(t_j))` errors, `v` the population variance.
    Heteroscedastic,
    /// Stationary AR(3) paths with marginal variance `mean_j v(t_j)`.
    Ar3 { coefficients: [f64; 3] },
}

/// Measurement error `delta * eps_jk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub delta: f64,
}

impl NoiseModel {
    pub fn heteroscedastic(delta: f64) -> Self {
        Self { kind: NoiseKind::Heteroscedastic, delta }
    }

    pub fn ar3(delta: f64) -> Self {
        Self { kind: NoiseKind::Ar3 { coefficients: DEFAULT_AR3 }, delta }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return config(format!("noise scale delta must be finite and >= 0, got {}", self.delta));
        }
        if let NoiseKind::Ar3 { coefficients } = self.kind {
            check_stationary(coefficients)?;
        }
        Ok(())
    }

    /// Covariance `V_N` of the scaled errors `delta * eps_k` on the grid.
    pub fn error_covariance(&self, pop_variance: &[f64]) -> Result<SymmetricMatrix> {
        self.validate()?;
        let scale = self.delta * self.delta;
        match self.kind {
            NoiseKind::Heteroscedastic => {
                let diag: Vec<f64> = pop_variance.iter().map(|v| scale * v).collect();
                Ok(SymmetricMatrix::from_diagonal(&diag))
            }
            NoiseKind::Ar3 { coefficients } => {
                let d = pop_variance.len();
                let target = pop_variance.iter().sum::<f64>() / d as f64;
                let innovation = ar3_innovation_variance(coefficients, target)?;
                let acov = ar3_autocovariance(coefficients, innovation, d.saturating_sub(1))?;
                Ok(SymmetricMatrix::from_fn(d, |i, j| scale * acov[i - j]))
            }
        }
    }
}

/// Noisy observations `Y_jk` for the sampled units, rows in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    grid: TimeGrid,
    values: CurveMatrix,
}

impl ObservationMatrix {
    pub fn new(grid: TimeGrid, values: CurveMatrix) -> Result<Self> {
        if values.cols() != grid.len() {
            return contract(format!(
                "observations have {} columns for a grid of {} points",
                values.cols(),
                grid.len()
            ));
        }
        if !values.is_finite() {
            return contract("observations contain non-finite values");
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &CurveMatrix {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }
}

/// Observe the listed units with measurement error drawn from `stream`.
pub fn observe(
    pop: &CurvePopulation,
    units: &[usize],
    noise: &NoiseModel,
    stream: &RngStream,
) -> Result<ObservationMatrix> {
    noise.validate()?;
    if let Some(&bad) = units.iter().find(|&&k| k >= pop.len()) {
        return contract(format!("unit {bad} out of range for a population of {}", pop.len()));
    }
    let d = pop.grid.len();
    let mut values = pop.curves.select_rows(units)?;
    if noise.delta == 0.0 {
        return ObservationMatrix::new(pop.grid.clone(), values);
    }
    let variance = pop.variance_curve()?;
    let mut rng = stream.rng();
    match noise.kind {
        NoiseKind::Heteroscedastic => {
            let sds: Vec<f64> = variance.iter().map(|v| noise.delta * v.sqrt()).collect();
            for i in 0..units.len() {
                for (y, sd) in values.row_mut(i).iter_mut().zip(&sds) {
                    *y += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        NoiseKind::Ar3 { coefficients } => {
            let target = variance.iter().sum::<f64>() / d as f64;
            let innovation_sd = ar3_innovation_variance(coefficients, target)?.sqrt();
            let mut path = vec![0.0; AR3_BURN_IN + d];
            for i in 0..units.len() {
                ar3_path(coefficients, innovation_sd, &mut rng, &mut path);
                for (y, e) in values.row_mut(i).iter_mut().zip(&path[AR3_BURN_IN..]) {
                    *y += noise.delta * e;
                }
            }
        }
    }
    ObservationMatrix::new(pop.grid.clone(), values)
}

fn ar3_path<R: Rng>(coeffs: [f64; 3], innovation_sd: f64, rng: &mut R, path: &mut [f64]) {
    let [a1, a2, a3] = coeffs;
    for j in 0..path.len() {
        let lag = |l: usize| if j >= l { path[j - l] } else { 0.0 };
        let eta: f64 = rng.sample::<f64, _>(StandardNormal) * innovation_sd;
        path[j] = a1 * lag(1) + a2 * lag(2) + a3 * lag(3) + eta;
    }
}

/// Stationarity of `e_j = a1 e_{j-1} + a2 e_{j-2} + a3 e_{j-3} + eta_j`, via
/// the step-down recursion to partial autocorrelations.
pub fn check_stationary(coeffs: [f64; 3]) -> Result<()> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return config("AR(3) coefficients must be finite");
    }
    let mut phi = coeffs.to_vec();
    while let Some(&kappa) = phi.last() {
        if kappa.abs() >= 1.0 {
            return config(format!(
                "AR(3) coefficients {coeffs:?} are not stationary (partial autocorrelation {kappa})"
            ));
        }
        let p = phi.len();
        let denom = 1.0 - kappa * kappa;
        phi = (0..p - 1).map(|i| (phi[i] + kappa * phi[p - 2 - i]) / denom).collect();
    }
    Ok(())
}

/// Autocovariances `gamma_0..gamma_3` of the unit-innovation AR(3) from the
/// Yule-Walker equations.
fn unit_yule_walker(coeffs: [f64; 3]) -> Result<[f64; 4]> {
    check_stationary(coeffs)?;
    let [a1, a2, a3] = coeffs;
    #[rustfmt::skip]
    let a = vec![
        1.0, -a1,        -a2,  -a3,
        -a1, 1.0 - a2,   -a3,  0.0,
        -a2, -(a1 + a3), 1.0,  0.0,
        -a3, -a2,        -a1,  1.0,
    ];
    let g = solve_dense(4, a, vec![1.0, 0.0, 0.0, 0.0])?;
    Ok([g[0], g[1], g[2], g[3]])
}

/// Innovation variance making the stationary AR(3) variance equal `target_variance`.
pub fn ar3_innovation_variance(coeffs: [f64; 3], target_variance: f64) -> Result<f64> {
    if !(target_variance >= 0.0 && target_variance.is_finite()) {
        return contract(format!("target variance must be finite and >= 0, got {target_variance}"));
    }
    let g = unit_yule_walker(coeffs)?;
    Ok(target_variance / g[0])
}

/// Stationary autocovariances at lags `0..=max_lag`.
pub fn ar3_autocovariance(coeffs: [f64; 3], innovation_variance: f64, max_lag: usize) -> Result<Vec<f64>> {
    let g = unit_yule_walker(coeffs)?;
    let mut out: Vec<f64> = g.iter().map(|v| v * innovation_variance).collect();
    let [a1, a2, a3] = coeffs;
    while out.len() <= max_lag {
        let h = out.len();
        out.push(a1 * out[h - 1] + a2 * out[h - 2] + a3 * out[h - 3]);
    }
    out.truncate(max_lag + 1);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_mode_config(size: usize, d: usize, variance: f64, seed: u64) -> PopulationConfig {
        let grid = TimeGrid::uniform(d, 1.0).unwrap();
        let times = grid.points().to_vec();
        PopulationConfig {
            size,
            grid,
            mean: CurveSpec::Tabulated { times: times.clone(), values: vec![0.0; d] },
            modes: vec![ModeSpec {
                curve: CurveSpec::Tabulated {
                    times: times.clone(),
                    values: times.iter().map(|t| (2.0 * std::f64::consts::PI * t).sin()).collect(),
                },
                variance,
            }],
            orthonormalize: true,
            seed,
        }
    }

    #[test]
    fn degenerate_modes_give_the_mean() {
        let grid = TimeGrid::uniform(30, 1.0).unwrap();
        let mut cfg = PopulationConfig::builtin(20, grid, 1);
        cfg.modes.iter_mut().for_each(|m| m.variance = 0.0);
        let pop = synthesize_population(&cfg).unwrap();
        let mu = cfg.mean_curve().unwrap();
        for row in pop.curves().iter_rows() {
            assert_eq!(row, &mu[..]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let grid = TimeGrid::uniform(10, 1.0).unwrap();
        let cfg = PopulationConfig::builtin(3, grid, 99);
        let a = synthesize_population(&cfg).unwrap();
        let b = synthesize_population(&cfg).unwrap();
        assert_eq!(a.curves(), b.curves());
    }

    #[test]
    fn single_mode_covariance_matches_outer_product() {
        let cfg = single_mode_config(10_000, 21, 1.0, 4);
        let pop = synthesize_population(&cfg).unwrap();
        let v = &cfg.basis().unwrap()[0];
        let mean = population_mean(&pop);
        let n = pop.len() as f64;
        for i in 0..21 {
            for j in 0..21 {
                let c: f64 = pop
                    .curves()
                    .iter_rows()
                    .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                    .sum::<f64>()
                    / (n - 1.0);
                assert!((c - v[i] * v[j]).abs() < 0.05, "({i},{j}) {c} vs {}", v[i] * v[j]);
            }
        }
    }

    #[test]
    fn non_orthonormal_basis_is_a_config_error() {
        let mut cfg = single_mode_config(10, 11, 1.0, 0);
        cfg.orthonormalize = false;
        assert!(matches!(synthesize_population(&cfg), Err(Error::Config(_))));
        let mut cfg = PopulationConfig::builtin(10, TimeGrid::uniform(11, 1.0).unwrap(), 0);
        cfg.modes.push(cfg.modes[0].clone());
        assert!(matches!(synthesize_population(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn empirical_mean_within_four_standard_errors() {
        let grid = TimeGrid::uniform(40, 1.0).unwrap();
        let cfg = PopulationConfig::builtin(10_000, grid, 12);
        let pop = synthesize_population(&cfg).unwrap();
        let mu = cfg.mean_curve().unwrap();
        let var = cfg.model_covariance().unwrap().diagonal();
        for ((m, target), v) in population_mean(&pop).iter().zip(&mu).zip(&var) {
            let bound = 4.0 * (v / pop.len() as f64).sqrt();
            assert!((m - target).abs() <= bound, "{m} vs {target} (bound {bound})");
        }
    }

    #[test]
    fn mean_and_variance_examples() {
        let grid = TimeGrid::uniform(4, 1.0).unwrap();
        let f = vec![1.0, -2.0, 0.5, 3.0];
        let pop =
            CurvePopulation::new(grid.clone(), CurveMatrix::from_rows(&[f.clone(), f.clone()]).unwrap())
                .unwrap();
        assert_eq!(population_mean(&pop), f);
        assert_eq!(population_variance_at(&pop).unwrap(), vec![0.0; 4]);

        let pop = CurvePopulation::new(
            grid.clone(),
            CurveMatrix::from_rows(&[vec![0.0; 4], vec![2.0; 4]]).unwrap(),
        )
        .unwrap();
        assert_eq!(population_mean(&pop), vec![1.0; 4]);
        assert_eq!(population_variance_at(&pop).unwrap(), vec![2.0; 4]);

        let single = CurvePopulation::new(grid, CurveMatrix::from_rows(&[vec![0.0; 4]]).unwrap()).unwrap();
        assert!(population_variance_at(&single).is_err());
    }

    #[test]
    fn column_means_match_naive_resummation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> =
            (0..5).map(|_| (0..4).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let grid = TimeGrid::uniform(4, 1.0).unwrap();
        let pop = CurvePopulation::new(grid, CurveMatrix::from_rows(&rows).unwrap()).unwrap();
        let got = population_mean(&pop);
        for j in 0..4 {
            let mut s = 0.0;
            for r in &rows {
                s += r[j];
            }
            assert!((got[j] - s / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_matches_mode_formula() {
        let grid = TimeGrid::uniform(25, 1.0).unwrap();
        let cfg = PopulationConfig::builtin(10_000, grid, 5);
        let pop = synthesize_population(&cfg).unwrap();
        let model = cfg.model_covariance().unwrap();
        for (j, v) in population_variance_at(&pop).unwrap().iter().enumerate() {
            let target = model.get(j, j);
            assert!((v - target).abs() <= 0.05 * target, "t{j}: {v} vs {target}");
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let grid = TimeGrid::uniform(12, 1.0).unwrap();
        let pop = synthesize_population(&PopulationConfig::builtin(30, grid, 2)).unwrap();
        let units = [3, 0, 17];
        for noise in [NoiseModel::heteroscedastic(0.0), NoiseModel::ar3(0.0)] {
            let obs = observe(&pop, &units, &noise, &RngStream::new(1, 1)).unwrap();
            for (i, &k) in units.iter().enumerate() {
                assert_eq!(obs.values().row(i), pop.curve(k));
            }
        }
        assert!(observe(&pop, &[30], &NoiseModel::heteroscedastic(0.1), &RngStream::new(1, 1)).is_err());
    }

    #[test]
    fn heteroscedastic_noise_variance() {
        let grid = TimeGrid::uniform(15, 1.0).unwrap();
        let pop = synthesize_population(&PopulationConfig::builtin(500, grid, 3)).unwrap();
        let units = vec![7usize; 10_000];
        let obs =
            observe(&pop, &units, &NoiseModel::heteroscedastic(1.0), &RngStream::new(4, 9)).unwrap();
        let v = population_variance_at(&pop).unwrap();
        let x = pop.curve(7);
        for j in 0..15 {
            let e: Vec<f64> = (0..units.len()).map(|i| obs.values().get(i, j) - x[j]).collect();
            let m = e.iter().sum::<f64>() / e.len() as f64;
            let var = e.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
            assert!((var - v[j]).abs() <= 0.05 * v[j], "t{j}: {var} vs {}", v[j]);
        }
    }

    #[test]
    fn ar3_noise_autocorrelation_and_stationarity() {
        let grid = TimeGrid::uniform(20, 1.0).unwrap();
        let pop = synthesize_population(&PopulationConfig::builtin(200, grid, 6)).unwrap();
        let units = vec![11usize; 10_000];
        let obs = observe(&pop, &units, &NoiseModel::ar3(1.0), &RngStream::new(8, 3)).unwrap();
        let x = pop.curve(11);
        let resid: Vec<Vec<f64>> =
            (0..units.len()).map(|i| (0..20).map(|j| obs.values().get(i, j) - x[j]).collect()).collect();
        let col_var = |j: usize| resid.iter().map(|r| r[j] * r[j]).sum::<f64>() / resid.len() as f64;
        let vars: Vec<f64> = (0..20).map(col_var).collect();
        let (lo, hi) = vars.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 1.2, "variance ratio {}", hi / lo);

        let g = unit_yule_walker(DEFAULT_AR3).unwrap();
        let rho1 = g[1] / g[0];
        let mut num = 0.0;
        let mut den = 0.0;
        for r in &resid {
            for j in 1..20 {
                num += r[j] * r[j - 1];
            }
            for v in r {
                den += v * v;
            }
        }
        let emp = num / 19.0 / (den / 20.0);
        assert!((emp - rho1).abs() < 0.03, "lag-1 autocorrelation {emp} vs {rho1}");
    }

    #[test]
    fn innovation_variance_examples() {
        assert!((ar3_innovation_variance([0.0, 0.0, 0.0], 3.0).unwrap() - 3.0).abs() < 1e-14);
        assert!((ar3_innovation_variance([0.5, 0.0, 0.0], 1.0).unwrap() - 0.75).abs() < 1e-14);
        assert!(matches!(ar3_innovation_variance([1.2, 0.0, 0.0], 1.0), Err(Error::Config(_))));
        assert!(check_stationary([0.5, 0.5, 0.1]).is_err());
        assert!(check_stationary(DEFAULT_AR3).is_ok());
    }

    #[test]
    fn innovation_variance_against_long_simulation() {
        let sigma2 = ar3_innovation_variance(DEFAULT_AR3, 1.0).unwrap();
        let mut rng = RngStream::new(77, 0).rng();
        let mut path = vec![0.0; 1_000_000 + AR3_BURN_IN];
        ar3_path(DEFAULT_AR3, sigma2.sqrt(), &mut rng, &mut path);
        let tail = &path[AR3_BURN_IN..];
        let var = tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64;
        assert!((var - 1.0).abs() < 0.02, "simulated variance {var}");
    }

    #[test]
    fn autocovariance_recursion_consistent_with_yule_walker() {
        let acov = ar3_autocovariance(DEFAULT_AR3, 1.0, 10).unwrap();
        let g = unit_yule_walker(DEFAULT_AR3).unwrap();
        for l in 0..4 {
            assert!((acov[l] - g[l]).abs() < 1e-12);
        }
        let [a1, a2, a3] = DEFAULT_AR3;
        for h in 3..=10 {
            let rhs = a1 * acov[h - 1] + a2 * acov[h - 2] + a3 * acov[h - 3];
            assert!((acov[h] - rhs).abs() < 1e-12);
        }
        // gamma_1 equation of the system
        assert!((g[1] - (a1 * g[0] + a2 * g[1] + a3 * g[2])).abs() < 1e-12);
    }

    #[test]
    fn tabulated_curves_interpolate() {
        let grid = TimeGrid::uniform(5, 1.0).unwrap();
        let spec = CurveSpec::Tabulated { times: vec![0.0, 1.0], values: vec![0.0, 4.0] };
        assert_eq!(spec.evaluate(&grid).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let bad = CurveSpec::Tabulated { times: vec![0.0, 0.5], values: vec![0.0, 4.0] };
        assert!(bad.evaluate(&grid).is_err());
    }
}
