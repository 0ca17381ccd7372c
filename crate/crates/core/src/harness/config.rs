use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthGrid;
use crate::error::{config, Error, Result};
use crate::numerics::TimeGrid;
use crate::population::{NoiseKind, NoiseModel, DEFAULT_AR3};
use crate::smooth::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Linear interpolation of the raw observations.
    Lin,
    /// Bandwidth from the leave-one-out criterion with `w_l / (1 - w_k)` weights.
    Cv,
    /// Bandwidth from the stratified design-weighted criterion.
    Wcv,
    /// Bandwidth minimizing the loss against the noise-free estimator.
    OracleH,
    /// Horvitz-Thompson mean of the noise-free sampled curves.
    OracleMu,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] =
        [EstimatorKind::Lin, EstimatorKind::Cv, EstimatorKind::Wcv, EstimatorKind::OracleH, EstimatorKind::OracleMu];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Lin => "lin",
            EstimatorKind::Cv => "cv",
            EstimatorKind::Wcv => "wcv",
            EstimatorKind::OracleH => "oracle_h",
            EstimatorKind::OracleMu => "oracle_mu",
        }
    }

    pub(crate) fn index(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignChoice {
    Srswor,
    Stratified,
}

impl DesignChoice {
    pub fn name(self) -> &'static str {
        match self {
            DesignChoice::Srswor => "srswor",
            DesignChoice::Stratified => "stratified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    Heteroscedastic,
    Ar3,
}

impl NoiseChoice {
    pub fn name(self) -> &'static str {
        match self {
            NoiseChoice::Heteroscedastic => "heteroscedastic",
            NoiseChoice::Ar3 => "ar3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSection {
    pub size: usize,
    /// Number of grid points `d`.
    pub points: usize,
    /// Right end `T` of the time interval.
    pub end: f64,
    /// Seed of the synthetic population; derived from the master seed when absent.
    pub seed: Option<u64>,
    /// Score standard deviations of the built-in modes.
    pub mode_sd: Option<Vec<f64>>,
    /// Load the population from a curve table instead of synthesizing it.
    pub file: Option<PathBuf>,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self { size: 2000, points: 100, end: 1.0, seed: None, mode_sd: None, file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub sample_size: usize,
    /// Quantile orders of the unit totals separating the strata.
    pub cuts: Vec<f64>,
    pub designs: Vec<DesignChoice>,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self { sample_size: 200, cuts: vec![0.5, 0.85], designs: vec![DesignChoice::Srswor, DesignChoice::Stratified] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub models: Vec<NoiseChoice>,
    pub deltas: Vec<f64>,
    pub ar3_coefficients: [f64; 3],
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            models: vec![NoiseChoice::Heteroscedastic, NoiseChoice::Ar3],
            deltas: vec![0.05, 0.25],
            ar3_coefficients: DEFAULT_AR3,
        }
    }
}

impl NoiseSection {
    pub fn model(&self, choice: NoiseChoice, delta: f64) -> NoiseModel {
        let kind = match choice {
            NoiseChoice::Heteroscedastic => NoiseKind::Heteroscedastic,
            NoiseChoice::Ar3 => NoiseKind::Ar3 { coefficients: self.ar3_coefficients },
        };
        NoiseModel { kind, delta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandwidthSection {
    pub count: usize,
    /// Smallest candidate; twice the grid spacing when absent.
    pub min: Option<f64>,
    /// Largest candidate; `T/4` when absent.
    pub max: Option<f64>,
    /// Explicit candidate list, overriding `count`, `min` and `max`.
    pub values: Option<Vec<f64>>,
    pub kernel: Kernel,
}

impl Default for BandwidthSection {
    fn default() -> Self {
        Self { count: 20, min: None, max: None, values: None, kernel: Kernel::Epanechnikov }
    }
}

impl BandwidthSection {
    pub fn grid(&self, time: &TimeGrid) -> Result<BandwidthGrid> {
        let bad = |e: Error| Error::Config(format!("bandwidth grid: {e}"));
        if let Some(values) = &self.values {
            return BandwidthGrid::new(values.clone()).map_err(bad);
        }
        let lo = self.min.unwrap_or(2.0 * time.max_spacing());
        let hi = self.max.unwrap_or(time.end() / 4.0);
        BandwidthGrid::log_spaced(lo, hi, self.count).map_err(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsSection {
    pub enabled: bool,
    pub alpha: f64,
    /// Simulated Gaussian paths per band.
    pub replicates: usize,
}

impl Default for BandsSection {
    fn default() -> Self {
        Self { enabled: true, alpha: 0.05, replicates: 2000 }
    }
}

/// Everything a Monte Carlo run needs; serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Monte Carlo replicates `M`.
    pub replicates: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub estimators: Vec<EstimatorKind>,
    pub population: PopulationSection,
    pub design: DesignSection,
    pub noise: NoiseSection,
    pub bandwidth: BandwidthSection,
    pub bands: BandsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            replicates: 200,
            workers: 0,
            estimators: EstimatorKind::ALL.to_vec(),
            population: PopulationSection::default(),
            design: DesignSection::default(),
            noise: NoiseSection::default(),
            bandwidth: BandwidthSection::default(),
            bands: BandsSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Settings of the full-size study: `N = 20000`, `n = 1000`, `d = 200`,
    /// `M = 1000`, `B = 10000`, five strata.
    pub fn paper_scale() -> Self {
        let mut c = Self::default();
        c.replicates = 1000;
        c.population.size = 20_000;
        c.population.points = 200;
        c.design.sample_size = 1000;
        c.design.cuts = vec![0.5, 0.7, 0.85, 0.95];
        c.bands.replicates = 10_000;
        c
    }

    /// Parse TOML text; keys it sets override the desk defaults, or the
    /// full-size defaults when `paper_scale` is set.
    pub fn from_toml_str(text: &str, paper_scale: bool) -> Result<Self> {
        let base = if paper_scale { Self::paper_scale() } else { Self::default() };
        let mut merged = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        let overrides: toml::Value = toml::from_str(text)?;
        merge(&mut merged, overrides);
        let parsed: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        parsed.validate()?;
        Ok(parsed)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return config("replicates must be at least 1");
        }
        if self.estimators.is_empty() {
            return config("no estimators selected");
        }
        if self.population.file.is_none() {
            if self.population.size < 2 {
                return config("population size must be at least 2");
            }
            if self.population.points < 2 {
                return config("the grid needs at least 2 points");
            }
            if !(self.population.end > 0.0 && self.population.end.is_finite()) {
                return config("population.end must be positive");
            }
        }
        if self.design.sample_size < 2 {
            return config("sample size must be at least 2");
        }
        if self.design.designs.is_empty() || self.noise.models.is_empty() || self.noise.deltas.is_empty() {
            return config("designs, noise models and deltas must be nonempty");
        }
        if let Some(&d) = self.noise.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return config(format!("noise delta must be finite and >= 0, got {d}"));
        }
        if !(self.bands.alpha > 0.0 && self.bands.alpha < 1.0) {
            return config("bands.alpha must lie in (0, 1)");
        }
        if self.bands.enabled && self.bands.replicates == 0 {
            return config("bands.replicates must be at least 1");
        }
        if self.bandwidth.values.is_none() && self.bandwidth.count == 0 {
            return config("bandwidth.count must be at least 1");
        }
        for m in &self.noise.models {
            self.noise.model(*m, 0.0).validate()?;
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("", false).unwrap(), ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_toml_str("", true).unwrap(), ExperimentConfig::paper_scale());
    }

    #[test]
    fn sections_override_single_keys() {
        let text = "seed = 9\nestimators = [\"wcv\", \"oracle_h\"]\n[population]\nsize = 300\n[noise]\nmodels = [\"ar3\"]\n";
        let c = ExperimentConfig::from_toml_str(text, false).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.population.size, 300);
        assert_eq!(c.population.points, 100);
        assert_eq!(c.noise.models, vec![NoiseChoice::Ar3]);
        assert_eq!(c.estimators, vec![EstimatorKind::Wcv, EstimatorKind::OracleH]);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::paper_scale();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text, false).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "replicates = 0",
            "estimators = [\"bcv\"]",
            "[population]\nsizes = 3",
            "[noise]\nar3_coefficients = [1.2, 0.0, 0.0]",
            "[bands]\nalpha = 1.5",
            "seed = \"x\"",
            "[[broken",
        ] {
            let err = ExperimentConfig::from_toml_str(text, false).unwrap_err();
            assert!(matches!(err, Error::Config(_) | Error::Toml(_)), "{text}: {err}");
        }
    }
}
