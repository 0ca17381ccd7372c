//! Monte Carlo driver: repeated sampling from a fixed population, every
//! estimator on every sample, and summaries of losses, coverage and band area.

mod config;
mod output;
mod summary;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    BandsSection, BandwidthSection, DesignChoice, DesignSection, EstimatorKind, ExperimentConfig,
    NoiseChoice, NoiseSection, PopulationSection,
};
pub use output::{cell_file_stem, write_outputs};
pub use summary::{summarize, EstimatorSummary, Quartiles};

use crate::bands::{band_area, band_area_absolute, build_band, covers};
use crate::bandwidth::{argmin, oracle_loss, r_loss, score_from_smoothed, stratified_loo_weights, CvWeights, SmootherBank};
use crate::design::{neyman_allocation, stratify_by_total, InclusionProbabilities, SampleDraw, SamplingDesign, StratumAssignment};
use crate::error::{Error, Result};
use crate::estimate::{ht_covariance, ht_mean, MeanEstimate};
use crate::matrix::CurveMatrix;
use crate::numerics::{rng::mix64, RngStream, TimeGrid};
use crate::population::{
    observe, population_mean, synthesize_population, CurvePopulation, ModeSpec, ObservationMatrix, PopulationConfig,
};
use crate::smooth::linear_interpolate;

const POPULATION_TAG: u64 = 0x706f_7075_6c61_7469;
const GAUSSIAN_TAG: u64 = 0x6761_7573_7369_616e;

/// One `(noise model, delta, design)` combination of the study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub noise: NoiseChoice,
    pub delta: f64,
    pub design: DesignChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimator: EstimatorKind,
    pub r_loss: Option<f64>,
    pub l_loss: Option<f64>,
    pub bandwidth: Option<f64>,
    /// Band area `int 2 c sigma_hat dt`.
    pub area: Option<f64>,
    pub area_absolute: Option<f64>,
    pub threshold: Option<f64>,
    pub covers: Option<bool>,
    pub clipped_mass: Option<f64>,
    pub error: Option<String>,
}

impl EstimatorOutcome {
    fn failed(estimator: EstimatorKind, err: &Error) -> Self {
        Self {
            estimator,
            r_loss: None,
            l_loss: None,
            bandwidth: None,
            area: None,
            area_absolute: None,
            threshold: None,
            covers: None,
            clipped_mass: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub cell: Cell,
    pub outcomes: Vec<EstimatorOutcome>,
}

impl ReplicateResult {
    pub fn failed(&self) -> bool {
        self.outcomes.iter().any(|o| o.error.is_some())
    }

    pub fn outcome(&self, e: EstimatorKind) -> Option<&EstimatorOutcome> {
        self.outcomes.iter().find(|o| o.estimator == e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub replicates: Vec<ReplicateResult>,
    pub summary: Vec<EstimatorSummary>,
}

impl CellResult {
    pub fn summary_for(&self, e: EstimatorKind) -> Option<&EstimatorSummary> {
        self.summary.iter().find(|s| s.estimator == e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn failed_replicates(&self) -> usize {
        self.cells.iter().flat_map(|c| &c.replicates).filter(|r| r.failed()).count()
    }

    pub fn total_replicates(&self) -> usize {
        self.cells.iter().map(|c| c.replicates.len()).sum()
    }

    /// More than 10% of replicates had at least one failed estimator.
    pub fn excessive_failures(&self) -> bool {
        10 * self.failed_replicates() > self.total_replicates()
    }

    pub fn cell(&self, noise: NoiseChoice, delta: f64, design: DesignChoice) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.cell.noise == noise && c.cell.delta == delta && c.cell.design == design)
    }
}

/// Population, designs and smoothers shared read-only by every replicate.
#[derive(Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    population: Arc<CurvePopulation>,
    truth: Vec<f64>,
    bank: SmootherBank,
    strata: Option<StratumAssignment>,
    designs: Vec<(DesignChoice, SamplingDesign, InclusionProbabilities)>,
}

/// Population described by the `[population]` section.
pub fn build_population(config: &ExperimentConfig) -> Result<CurvePopulation> {
    let p = &config.population;
    if let Some(file) = &p.file {
        let (grid, curves) = crate::io::read_curves(file)?;
        return CurvePopulation::new(grid, curves);
    }
    let grid = TimeGrid::uniform(p.points, p.end)?;
    let seed = p.seed.unwrap_or_else(|| mix64(config.seed ^ POPULATION_TAG));
    let mut pc = PopulationConfig::builtin(p.size, grid, seed);
    if let Some(sd) = &p.mode_sd {
        if sd.len() != pc.modes.len() {
            return Err(Error::Config(format!("mode_sd needs {} values, got {}", pc.modes.len(), sd.len())));
        }
        pc.modes = pc.modes.iter().zip(sd).map(|(m, s)| ModeSpec { curve: m.curve.clone(), variance: s * s }).collect();
    }
    synthesize_population(&pc)
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let population = build_population(&config)?;
        Self::with_population(config, population)
    }

    pub fn with_population(config: ExperimentConfig, population: CurvePopulation) -> Result<Self> {
        config.validate()?;
        let grid = population.grid().clone();
        let bank = SmootherBank::new(&grid, config.bandwidth.grid(&grid)?, config.bandwidth.kernel)?;
        let n = config.design.sample_size;
        let needs_strata = config.design.designs.contains(&DesignChoice::Stratified);
        let strata = needs_strata.then(|| stratify_by_total(&population, &config.design.cuts)).transpose()?;
        let mut designs = Vec::new();
        for &choice in &config.design.designs {
            let design = match choice {
                DesignChoice::Srswor => SamplingDesign::srswor(population.len(), n)?,
                DesignChoice::Stratified => {
                    let s = strata.as_ref().expect("strata built for stratified designs");
                    SamplingDesign::stratified(s, &neyman_allocation(&population, s, n)?)?
                }
            };
            let probs = design.inclusion_probabilities();
            designs.push((choice, design, probs));
        }
        // population variance is needed by the noise models; compute it once up front
        population.variance_curve()?;
        let truth = population_mean(&population);
        Ok(Self { config, population: Arc::new(population), truth, bank, strata, designs })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn population(&self) -> &CurvePopulation {
        &self.population
    }

    pub fn strata(&self) -> Option<&StratumAssignment> {
        self.strata.as_ref()
    }

    pub fn design(&self, choice: DesignChoice) -> Option<&SamplingDesign> {
        self.designs.iter().find(|d| d.0 == choice).map(|d| &d.1)
    }

    pub fn bank(&self) -> &SmootherBank {
        &self.bank
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &noise in &self.config.noise.models {
            for &delta in &self.config.noise.deltas {
                for &design in &self.config.design.designs {
                    cells.push(Cell { noise, delta, design });
                }
            }
        }
        cells
    }

    /// Replicate `index` of `cell`: the sample comes from stream `2 index` and
    /// the measurement error from stream `2 index + 1` of the master seed.
    pub fn run_replicate(&self, cell: Cell, index: usize) -> ReplicateResult {
        let outcomes = match self.replicate_outcomes(cell, index) {
            Ok(o) => o,
            Err(e) => self.config.estimators.iter().map(|&k| EstimatorOutcome::failed(k, &e)).collect(),
        };
        ReplicateResult { index, cell, outcomes }
    }

    pub fn inclusion_probabilities(&self, choice: DesignChoice) -> Result<&InclusionProbabilities> {
        self.designs
            .iter()
            .find(|d| d.0 == choice)
            .map(|d| &d.2)
            .ok_or_else(|| Error::Config(format!("design {} not configured", choice.name())))
    }

    /// Sample and noisy observations of replicate `index` in `cell`.
    pub fn sample(&self, cell: Cell, index: usize) -> Result<(SampleDraw, ObservationMatrix)> {
        let seed = self.config.seed;
        let design = self
            .design(cell.design)
            .ok_or_else(|| Error::Config(format!("design {} not configured", cell.design.name())))?;
        let draw = design.draw(&RngStream::new(seed, 2 * index as u64))?;
        let noise = self.config.noise.model(cell.noise, cell.delta);
        let obs = observe(&self.population, draw.units(), &noise, &RngStream::new(seed, 2 * index as u64 + 1))?;
        Ok((draw, obs))
    }

    /// Stream for the Gaussian paths behind the band of `kind` in replicate `index`.
    pub fn band_stream(&self, kind: EstimatorKind, index: usize) -> RngStream {
        RngStream::namespace(self.config.seed, GAUSSIAN_TAG, index as u64 * 8 + kind.index())
    }

    fn replicate_outcomes(&self, cell: Cell, index: usize) -> Result<Vec<EstimatorOutcome>> {
        let probs = self.inclusion_probabilities(cell.design)?;
        let (draw, obs) = self.sample(cell, index)?;
        let grid = self.population.grid();
        let true_rows = self.population.curves().select_rows(draw.units())?;
        let oracle = ht_mean(grid, &true_rows, &draw, probs)?;

        let estimators = &self.config.estimators;
        let smoothing = estimators.iter().any(|e| matches!(e, EstimatorKind::Cv | EstimatorKind::Wcv | EstimatorKind::OracleH));
        let mut per_h: Vec<(CurveMatrix, MeanEstimate, f64)> = Vec::new();
        if smoothing {
            for w in self.bank.smoothers() {
                let smoothed = w.smooth_rows(obs.values())?;
                let mean = ht_mean(grid, &smoothed, &draw, probs)?;
                let l = oracle_loss(&mean, &oracle)?;
                per_h.push((smoothed, mean, l));
            }
        }
        let pick = |weights: Result<CvWeights>| -> Result<usize> {
            let weights = weights?;
            argmin(per_h.iter().map(|(s, _, _)| score_from_smoothed(&obs, s, &weights)))
                .ok_or_else(|| Error::Numerical("every cross-validation score is non-finite".into()))
        };

        let mut outcomes = Vec::with_capacity(estimators.len());
        for &kind in estimators {
            let chosen: Result<(CurveMatrix, MeanEstimate, Option<f64>)> = match kind {
                EstimatorKind::Lin => (|| {
                    let rows = obs
                        .values()
                        .iter_rows()
                        .map(|r| linear_interpolate(r, grid, grid))
                        .collect::<Result<Vec<_>>>()?;
                    let m = CurveMatrix::from_rows(&rows)?;
                    let mean = ht_mean(grid, &m, &draw, probs)?;
                    Ok((m, mean, None))
                })(),
                EstimatorKind::OracleMu => Ok((true_rows.clone(), oracle.clone(), None)),
                EstimatorKind::Cv | EstimatorKind::Wcv | EstimatorKind::OracleH => {
                    let i = match kind {
                        EstimatorKind::Cv => pick(CvWeights::opsomer_miller(&draw, probs)),
                        EstimatorKind::Wcv => pick(stratified_loo_weights(&draw, probs)),
                        _ => argmin(per_h.iter().map(|p| p.2))
                            .ok_or_else(|| Error::Numerical("oracle loss is non-finite for every bandwidth".into())),
                    };
                    i.map(|i| (per_h[i].0.clone(), per_h[i].1.clone(), Some(self.bank.bandwidths().values()[i])))
                }
            };
            outcomes.push(match chosen {
                Ok((curves, mean, h)) => self
                    .evaluate(kind, index, &curves, mean, h, &oracle, &draw, probs)
                    .unwrap_or_else(|e| EstimatorOutcome::failed(kind, &e)),
                Err(e) => EstimatorOutcome::failed(kind, &e),
            });
        }
        Ok(outcomes)
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        kind: EstimatorKind,
        index: usize,
        curves: &CurveMatrix,
        mean: MeanEstimate,
        bandwidth: Option<f64>,
        oracle: &MeanEstimate,
        draw: &SampleDraw,
        probs: &InclusionProbabilities,
    ) -> Result<EstimatorOutcome> {
        let mut out = EstimatorOutcome {
            estimator: kind,
            r_loss: Some(r_loss(&mean, &self.truth)?),
            l_loss: Some(oracle_loss(&mean, oracle)?),
            bandwidth,
            area: None,
            area_absolute: None,
            threshold: None,
            covers: None,
            clipped_mass: None,
            error: None,
        };
        let bands = &self.config.bands;
        if bands.enabled {
            let band = ht_covariance(self.population.grid(), curves, draw, probs).and_then(|cov| {
                build_band(&mean, &cov, bands.alpha, bands.replicates, &self.band_stream(kind, index))
            });
            match band {
                Ok(band) => {
                    out.area = Some(band_area(&band));
                    out.area_absolute = Some(band_area_absolute(&band));
                    out.threshold = Some(band.threshold);
                    out.covers = Some(covers(&band, &self.truth)?);
                    out.clipped_mass = Some(band.diagnostics.clipped_mass);
                }
                // losses stay valid when no band can be formed
                Err(e) => out.error = Some(e.to_string()),
            }
        }
        Ok(out)
    }

    /// All replicates of one cell, in index order.
    pub fn run_cell(&self, cell: Cell) -> CellResult {
        let replicates: Vec<ReplicateResult> =
            (0..self.config.replicates).into_par_iter().map(|i| self.run_replicate(cell, i)).collect();
        let summary = summarize(&replicates, &self.config.estimators);
        CellResult { cell, replicates, summary }
    }

    /// Every cell, on a pool of `config.workers` threads. Results do not
    /// depend on the number of workers.
    pub fn run(&self) -> Result<ExperimentResult> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let cells = pool.install(|| self.cells().into_iter().map(|c| self.run_cell(c)).collect());
        Ok(ExperimentResult { cells })
    }
}

/// Prepare, run and, when `out` is given, write the result files.
pub fn run_experiment(config: ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    let experiment = Experiment::prepare(config)?;
    let result = experiment.run()?;
    if let Some(dir) = out {
        write_outputs(dir, &experiment, &result)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.replicates = 4;
        c.population.size = 120;
        c.population.points = 21;
        c.design.sample_size = 24;
        c.noise.deltas = vec![0.05];
        c.noise.models = vec![NoiseChoice::Heteroscedastic];
        c.bandwidth.count = 6;
        c.bands.replicates = 200;
        c.workers = 2;
        c
    }

    #[test]
    fn noiseless_oracle_and_census() {
        let mut c = small_config();
        c.noise.deltas = vec![0.0];
        c.design.designs = vec![DesignChoice::Srswor];
        let exp = Experiment::prepare(c.clone()).unwrap();
        let r = exp.run_replicate(exp.cells()[0], 0);
        assert_eq!(r.outcome(EstimatorKind::OracleMu).unwrap().l_loss, Some(0.0));

        c.design.sample_size = c.population.size;
        let exp = Experiment::prepare(c).unwrap();
        let r = exp.run_replicate(exp.cells()[0], 0);
        let lin = r.outcome(EstimatorKind::Lin).unwrap();
        assert!(lin.r_loss.unwrap() < 1e-20, "{lin:?}");
    }

    #[test]
    fn replicates_are_deterministic() {
        let exp = Experiment::prepare(small_config()).unwrap();
        let cell = exp.cells()[1];
        assert_eq!(exp.run_replicate(cell, 3), exp.run_replicate(cell, 3));
    }

    #[test]
    fn oracle_bandwidth_minimizes_l() {
        let exp = Experiment::prepare(small_config()).unwrap();
        for cell in exp.cells() {
            for i in 0..3 {
                let r = exp.run_replicate(cell, i);
                let best = r.outcome(EstimatorKind::OracleH).unwrap().l_loss.unwrap();
                for e in [EstimatorKind::Cv, EstimatorKind::Wcv] {
                    assert!(best <= r.outcome(e).unwrap().l_loss.unwrap());
                }
            }
        }
    }

    #[test]
    fn single_replicate_summary_is_that_replicate() {
        let mut c = small_config();
        c.replicates = 1;
        let exp = Experiment::prepare(c).unwrap();
        let res = exp.run().unwrap();
        let cell = &res.cells[0];
        let rep = &cell.replicates[0];
        for s in &cell.summary {
            let o = rep.outcome(s.estimator).unwrap();
            let r = o.r_loss.unwrap();
            assert_eq!((s.r_loss.mean, s.r_loss.q1, s.r_loss.median, s.r_loss.q3), (r, r, r, r));
            assert_eq!(s.coverage, o.covers.map(|c| if c { 1.0 } else { 0.0 }));
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut a = small_config();
        a.workers = 1;
        let mut b = small_config();
        b.workers = 3;
        let ra = Experiment::prepare(a).unwrap().run().unwrap();
        let rb = Experiment::prepare(b).unwrap().run().unwrap();
        assert_eq!(ra, rb);
    }
}
