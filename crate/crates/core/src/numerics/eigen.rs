use super::SymmetricMatrix;
use crate::error::{Error, Result};

const MAX_QL_ITERATIONS: usize = 60;

/// Eigendecomposition `A = V diag(values) V^T` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Row-major `n x n`; column `i` is the unit eigenvector of `values[i]`.
    pub vectors: Vec<f64>,
    pub order: usize,
}

impl SymEigen {
    #[inline]
    pub fn vector_component(&self, row: usize, col: usize) -> f64 {
        self.vectors[row * self.order + col]
    }

    /// `V diag(f(values)) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.order;
        let mapped: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        SymmetricMatrix::from_fn(n, |i, j| {
            let vi = &self.vectors[i * n..(i + 1) * n];
            let vj = &self.vectors[j * n..(j + 1) * n];
            (0..n).map(|k| vi[k] * mapped[k] * vj[k]).sum()
        })
    }
}

/// Symmetric eigendecomposition by Householder reduction to tridiagonal form
/// followed by the implicit QL algorithm.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<SymEigen> {
    if !a.is_finite() {
        return Err(Error::Numerical("sym_eig: matrix has non-finite entries".into()));
    }
    let n = a.order();
    if n == 0 {
        return Ok(SymEigen { values: Vec::new(), vectors: Vec::new(), order: 0 });
    }
    let mut v = a.to_dense();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e)?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| d[y].total_cmp(&d[x]));
    let values = idx.iter().map(|&i| d[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_col, &old_col) in idx.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + new_col] = v[row * n + old_col];
        }
    }
    Ok(SymEigen { values, vectors, order: n })
}

// Householder tridiagonalization (tred2). On exit `v` holds the orthogonal
// transform, `d` the diagonal and `e[1..]` the subdiagonal.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL iterations on the tridiagonal matrix (tql2).
fn tridiagonal_ql(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::Numerical(format!(
                        "sym_eig: QL did not converge for eigenvalue {l} of {n} \
                         after {MAX_QL_ITERATIONS} iterations (residual {:.3e})",
                        e[l].abs()
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn reconstruction_error(a: &SymmetricMatrix, eig: &SymEigen) -> f64 {
        eig.reconstruct_with(|v| v).max_abs_diff(a)
    }

    fn orthogonality_error(eig: &SymEigen) -> f64 {
        let n = eig.order;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 =
                    (0..n).map(|k| eig.vector_component(k, i) * eig.vector_component(k, j)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn random_symmetric(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        SymmetricMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity() {
        let eig = sym_eig(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(eig.values.len(), 3);
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(orthogonality_error(&eig) < 1e-14);
    }

    #[test]
    fn diagonal_axis_aligned() {
        let eig = sym_eig(&SymmetricMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert!((eig.values[0] - 4.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        assert!((eig.vector_component(1, 0).abs() - 1.0).abs() < 1e-14);
        assert!(eig.vector_component(0, 0).abs() < 1e-14);
        assert!((eig.vector_component(0, 1).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_order_8_reconstructs() {
        let a = random_symmetric(8, 11);
        let eig = sym_eig(&a).unwrap();
        assert!(reconstruction_error(&a, &eig) <= 1e-8 * a.max_abs());
        assert!(orthogonality_error(&eig) <= 1e-8);
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn agrees_with_nalgebra() {
        let a = random_symmetric(12, 5);
        let eig = sym_eig(&a).unwrap();
        let dense = nalgebra::DMatrix::from_row_slice(12, 12, &a.to_dense());
        let mut reference: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in eig.values.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn tiny_and_degenerate_orders() {
        let eig = sym_eig(&SymmetricMatrix::zeros(0)).unwrap();
        assert!(eig.values.is_empty());
        let eig = sym_eig(&SymmetricMatrix::from_diagonal(&[-3.0])).unwrap();
        assert_eq!(eig.values, vec![-3.0]);
        let eig = sym_eig(&SymmetricMatrix::zeros(4)).unwrap();
        assert!(eig.values.iter().all(|v| *v == 0.0));
        let mut nan = SymmetricMatrix::zeros(2);
        nan.set(0, 1, f64::NAN);
        assert!(matches!(sym_eig(&nan), Err(Error::Numerical(_))));
    }

    #[test]
    fn rank_one_all_ones() {
        let n = 50;
        let a = SymmetricMatrix::from_fn(n, |_, _| 2.0);
        let eig = sym_eig(&a).unwrap();
        assert!((eig.values[0] - 100.0).abs() < 1e-10);
        assert!(eig.values[1..].iter().all(|v| v.abs() < 1e-10));
        assert!(reconstruction_error(&a, &eig) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruction_contract(n in 1usize..30, seed in any::<u64>(), scale in -6i32..6) {
            let a = random_symmetric(n, seed).scaled(10f64.powi(scale));
            let eig = sym_eig(&a).unwrap();
            prop_assert!(reconstruction_error(&a, &eig) <= 1e-8 * a.max_abs());
            prop_assert!(orthogonality_error(&eig) <= 1e-8);
        }

        #[test]
        fn psd_inputs_have_nonnegative_spectrum(n in 1usize..25, k in 1usize..6, seed in any::<u64>()) {
            // sum of k outer products
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vecs: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let a = SymmetricMatrix::from_fn(n, |i, j| vecs.iter().map(|v| v[i] * v[j]).sum());
            let eig = sym_eig(&a).unwrap();
            let floor = -1e-8 * a.max_abs();
            prop_assert!(eig.values.iter().all(|&v| v >= floor));
        }
    }
}
