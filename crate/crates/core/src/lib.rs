//! Design-based estimation of the mean curve of a finite population of
//! curves observed with noise on a common time grid.
//!
//! The crate covers the full pipeline:
//!
//! - [`population`]: synthetic populations of curves and noisy observations
//!   (heteroscedastic or AR(3) measurement error).
//! - [`design`]: simple random sampling without replacement, stratified
//!   sampling, inclusion probabilities and Neyman-type allocation.
//! - [`smooth`]: local-linear kernel smoothing and the linear-interpolation
//!   baseline.
//! - [`estimate`]: Horvitz-Thompson mean and covariance estimators and the
//!   exact design covariance used for validation.
//! - [`bands`]: simultaneous confidence bands from Gaussian process
//!   simulation conditional on the estimated covariance.
//! - [`bandwidth`]: design-weighted cross-validation and loss functionals.
//! - [`harness`]: the Monte Carlo driver that repeats the whole pipeline over
//!   many samples and summarizes losses, coverage and band areas.
//!
//! ```
//! use curvemean::prelude::*;
//!
//! let grid = TimeGrid::uniform(41, 1.0).unwrap();
//! let config = PopulationConfig::builtin(400, grid.clone(), 7);
//! let pop = synthesize_population(&config).unwrap();
//! let design = SamplingDesign::srswor(pop.len(), 40).unwrap();
//! let draw = design.draw(&RngStream::new(1, 0)).unwrap();
//! let noise = NoiseModel::heteroscedastic(0.05);
//! let obs = observe(&pop, draw.units(), &noise, &RngStream::new(1, 1)).unwrap();
//! let smoother = local_linear_weights(&grid, &grid, 0.05, Kernel::Epanechnikov).unwrap();
//! let smoothed = smoother.smooth_rows(obs.values()).unwrap();
//! let probs = design.inclusion_probabilities();
//! let mean = ht_mean(&grid, &smoothed, &draw, &probs).unwrap();
//! assert_eq!(mean.values().len(), 41);
//! ```

pub mod bands;
pub mod bandwidth;
pub mod design;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod io;
pub mod numerics;
pub mod population;
pub mod smooth;

pub use error::{Error, Result};

/// Dense row-major matrix of curves: one row per unit, one column per grid point.
pub mod matrix;
pub use matrix::CurveMatrix;

pub mod prelude {
    pub use crate::bands::{
        band_area, band_threshold, build_band, covers, psd_project, simulate_sup_ratios,
        ConfidenceBand, PsdFactor,
    };
    pub use crate::bandwidth::{
        loo_mean, oracle_loss, r_loss, select_bandwidth, stratified_loo_weights, wcv_score,
        BandwidthGrid, CvVariant, CvWeights, SmootherBank,
    };
    pub use crate::design::{
        neyman_allocation, stratify_by_total, InclusionProbabilities, SampleDraw, SamplingDesign,
        StratumAssignment,
    };
    pub use crate::estimate::{
        exact_gamma, ht_covariance, ht_mean, variance_curve, CovarianceEstimate, MeanEstimate,
    };
    pub use crate::matrix::CurveMatrix;
    pub use crate::numerics::{
        empirical_quantile, standard_normals, sym_eig, trapezoid, RngStream, SymmetricMatrix,
        TimeGrid,
    };
    pub use crate::population::{
        observe, population_mean, population_variance_at, synthesize_population, CurvePopulation,
        NoiseModel, ObservationMatrix, PopulationConfig,
    };
    pub use crate::smooth::{
        kernel_eval, linear_interpolate, local_linear_weights, smooth_curve, Kernel,
        SmootherWeightMatrix,
    };
    pub use crate::{Error, Result};
}
