use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Spacing ratio above which a grid is reported as far from quasi-uniform.
const QUASI_UNIFORM_WARN: f64 = 10.0;

/// Common discretization grid `0 = t_1 < ... < t_d = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return contract(format!("time grid needs at least 2 points, got {}", points.len()));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return contract("time grid has non-finite points");
        }
        if points[0] != 0.0 {
            return contract(format!("time grid must start at 0, starts at {}", points[0]));
        }
        if let Some(w) = points.windows(2).position(|w| w[1] <= w[0]) {
            return contract(format!("time grid not strictly increasing at index {}", w + 1));
        }
        let grid = Self { points };
        let ratio = grid.spacing_ratio();
        if ratio > QUASI_UNIFORM_WARN {
            log::warn!("time grid spacing ratio {ratio:.2} exceeds {QUASI_UNIFORM_WARN}");
        }
        Ok(grid)
    }

    /// `d` equispaced points on `[0, t_end]`.
    pub fn uniform(d: usize, t_end: f64) -> Result<Self> {
        if d < 2 {
            return contract(format!("uniform grid needs d >= 2, got {d}"));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return contract(format!("grid end must be positive, got {t_end}"));
        }
        let step = t_end / (d - 1) as f64;
        let mut points: Vec<f64> = (0..d).map(|j| j as f64 * step).collect();
        points[d - 1] = t_end;
        Self::new(points)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Right end point `T`.
    #[inline]
    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn min_spacing(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Max spacing over min spacing.
    pub fn spacing_ratio(&self) -> f64 {
        self.max_spacing() / self.min_spacing()
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = crate::Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.points
    }
}

/// Trapezoidal rule for values sampled on `grid`.
pub fn trapezoid(values: &[f64], grid: &TimeGrid) -> Result<f64> {
    if values.len() != grid.len() {
        return contract(format!(
            "trapezoid: {} values for a grid of {} points",
            values.len(),
            grid.len()
        ));
    }
    let t = grid.points();
    Ok((1..t.len())
        .map(|j| (t[j] - t[j - 1]) * (values[j] + values[j - 1]))
        .sum::<f64>()
        * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::NAN]).is_err());
        assert!(TimeGrid::uniform(1, 1.0).is_err());
    }

    #[test]
    fn uniform_grid_hits_end_points() {
        let g = TimeGrid::uniform(11, 2.0).unwrap();
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(g.end(), 2.0);
        assert!((g.spacing_ratio() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trapezoid_constant() {
        for d in [2, 3, 17, 100] {
            let g = TimeGrid::uniform(d, 1.0).unwrap();
            let v = vec![1.0; d];
            assert!((trapezoid(&v, &g).unwrap() - 1.0).abs() < 1e-14);
        }
        let g = TimeGrid::new(vec![0.0, 0.1, 0.15, 0.7, 1.0]).unwrap();
        assert!((trapezoid(&[1.0; 5], &g).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_linear() {
        let g = TimeGrid::uniform(11, 1.0).unwrap();
        let v = g.points().to_vec();
        assert!((trapezoid(&v, &g).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_square_against_closed_form() {
        // error of the composite rule is h^2/12 * (f'(1) - f'(0)) = 1e-4 * 2 / 12
        let g = TimeGrid::uniform(101, 1.0).unwrap();
        let v: Vec<f64> = g.points().iter().map(|t| t * t).collect();
        let got = trapezoid(&v, &g).unwrap();
        assert!((got - 1.0 / 3.0).abs() <= 2e-5, "{got}");
    }

    #[test]
    fn trapezoid_length_mismatch() {
        let g = TimeGrid::uniform(5, 1.0).unwrap();
        assert!(matches!(trapezoid(&[1.0; 4], &g), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn grid_serde_validates() {
        let g: TimeGrid = serde_json::from_str("[0.0, 0.5, 1.0]").unwrap();
        assert_eq!(g.len(), 3);
        assert!(serde_json::from_str::<TimeGrid>("[0.0, 0.5, 0.4]").is_err());
    }
}
