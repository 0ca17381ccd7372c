//! Shared fixtures for the benchmarks in `benches/`.

use curvemean::prelude::*;

/// A stratified sample of noisy curves drawn from the built-in population.
pub struct Fixture {
    pub grid: TimeGrid,
    pub draw: SampleDraw,
    pub probs: InclusionProbabilities,
    pub obs: ObservationMatrix,
}

pub fn fixture(population: usize, sample: usize, points: usize) -> Fixture {
    let grid = TimeGrid::uniform(points, 1.0).expect("grid");
    let pop = synthesize_population(&PopulationConfig::builtin(population, grid.clone(), 11)).expect("population");
    let strata = stratify_by_total(&pop, &[0.5, 0.85]).expect("strata");
    let allocation = neyman_allocation(&pop, &strata, sample).expect("allocation");
    let design = SamplingDesign::stratified(&strata, &allocation).expect("design");
    let draw = design.draw(&RngStream::new(3, 0)).expect("draw");
    let obs = observe(&pop, draw.units(), &NoiseModel::heteroscedastic(0.1), &RngStream::new(3, 1)).expect("observe");
    Fixture { grid, probs: design.inclusion_probabilities(), draw, obs }
}
