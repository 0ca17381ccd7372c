use serde::{Deserialize, Serialize};

use super::{EstimatorKind, EstimatorOutcome, ReplicateResult};
use crate::numerics::empirical_quantile;

/// Mean and type-1 quartiles of one column; `count` values were present.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quartiles {
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let q = |p| empirical_quantile(values, p).expect("nonempty");
        Some(Self {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub r_loss: Quartiles,
    pub l_loss: Quartiles,
    pub bandwidth: Option<Quartiles>,
    pub area: Option<Quartiles>,
    /// Fraction of replicates whose band contains the population mean.
    pub coverage: Option<f64>,
    pub failures: usize,
}

/// Column summaries per estimator; failed cells are skipped and counted.
pub fn summarize(results: &[ReplicateResult], estimators: &[EstimatorKind]) -> Vec<EstimatorSummary> {
    estimators
        .iter()
        .map(|&e| {
            let outcomes: Vec<&EstimatorOutcome> = results.iter().filter_map(|r| r.outcome(e)).collect();
            let column = |f: fn(&EstimatorOutcome) -> Option<f64>| -> Vec<f64> {
                outcomes.iter().filter_map(|o| f(o)).collect()
            };
            let flags: Vec<bool> = outcomes.iter().filter_map(|o| o.covers).collect();
            EstimatorSummary {
                estimator: e,
                r_loss: Quartiles::of(&column(|o| o.r_loss)).unwrap_or_default(),
                l_loss: Quartiles::of(&column(|o| o.l_loss)).unwrap_or_default(),
                bandwidth: Quartiles::of(&column(|o| o.bandwidth)),
                area: Quartiles::of(&column(|o| o.area)),
                coverage: (!flags.is_empty())
                    .then(|| flags.iter().filter(|c| **c).count() as f64 / flags.len() as f64),
                failures: outcomes.iter().filter(|o| o.error.is_some()).count(),
            }
        })
        .collect()
}
