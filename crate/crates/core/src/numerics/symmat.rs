use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Symmetric matrix stored as its packed row-major lower triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    order: usize,
    lower: Vec<f64>,
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymmetricMatrix {
    pub fn zeros(order: usize) -> Self {
        Self { order, lower: vec![0.0; order * (order + 1) / 2] }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Build from a dense row-major matrix, averaging the two triangles.
    /// Fails when the input is not symmetric to `tol` relative to its largest entry.
    pub fn from_dense(order: usize, dense: &[f64], tol: f64) -> Result<Self> {
        if dense.len() != order * order {
            return contract(format!("dense matrix has {} entries, expected {order}^2", dense.len()));
        }
        let scale = dense.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut m = Self::zeros(order);
        for i in 0..order {
            for j in 0..=i {
                let a = dense[i * order + j];
                let b = dense[j * order + i];
                if (a - b).abs() > tol * scale {
                    return contract(format!("matrix not symmetric at ({i},{j}): {a} vs {b}"));
                }
                m.set(i, j, 0.5 * (a + b));
            }
        }
        Ok(m)
    }

    /// Build from a function of the index pair, evaluated on the lower triangle.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut lower = Vec::with_capacity(order * (order + 1) / 2);
        for i in 0..order {
            for j in 0..=i {
                lower.push(f(i, j));
            }
        }
        Self { order, lower }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[packed(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.lower[packed(i, j)] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.lower[packed(i, j)] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.order;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.get(i, j);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.lower.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { order: self.order, lower: self.lower.iter().map(|v| v * factor).collect() }
    }

    /// Packed lower triangle, row-major.
    pub fn packed_lower(&self) -> &[f64] {
        &self.lower
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.order, other.order, "order mismatch");
        self.lower.iter().zip(&other.lower).fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_access() {
        let mut m = SymmetricMatrix::zeros(3);
        m.set(2, 0, 5.0);
        assert_eq!(m.get(0, 2), 5.0);
        m.add(0, 2, 1.0);
        assert_eq!(m.get(2, 0), 6.0);
        let d = m.to_dense();
        assert_eq!(d[2], 6.0);
        assert_eq!(d[6], 6.0);
    }

    #[test]
    fn from_dense_checks_symmetry() {
        assert!(SymmetricMatrix::from_dense(2, &[1.0, 2.0, 2.0, 3.0], 1e-12).is_ok());
        assert!(SymmetricMatrix::from_dense(2, &[1.0, 2.0, 2.5, 3.0], 1e-12).is_err());
        assert!(SymmetricMatrix::from_dense(2, &[1.0, 2.0, 2.0], 1e-12).is_err());
    }
}
