//! Dense linear algebra substrate: row-major matrices, cyclic Jacobi
//! eigendecomposition, Gram-based singular values, a partial-pivoting solver
//! and a seeded Gaussian stream.

mod eigen;
mod matrix;
mod rng;
mod solve;

pub use eigen::{singular_values, sym_eig, SymEig, JACOBI_MAX_SWEEPS};
pub use matrix::{frobenius_norm_sq, matmul, Matrix};
pub use rng::{random_symmetric, randn_matrix, split_seed, RngStream};
pub use solve::{determinant, solve};
