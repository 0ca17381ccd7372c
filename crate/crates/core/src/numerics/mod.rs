//! Shared numerical kernels: time grids, quadrature, quantiles, symmetric
//! eigendecomposition and reproducible random streams.

mod eigen;
mod grid;
mod linsolve;
mod quantile;
pub(crate) mod rng;
mod symmat;

pub use eigen::{sym_eig, SymEigen};
pub use grid::{trapezoid, TimeGrid};
pub(crate) use linsolve::solve_dense;
pub use quantile::empirical_quantile;
pub(crate) use quantile::order_rank as quantile_rank;
pub use rng::{standard_normals, RngStream};
pub use symmat::SymmetricMatrix;
