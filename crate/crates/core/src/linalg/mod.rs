//! Sparse and dense kernels shared by every other module.

pub mod eig;
pub mod io;
pub mod solve;
pub mod sparse;

pub use eig::{gen_eig_dense, gen_eig_sym, EigMode, EigOptions, EigenPairs, Identity, LinearOperator};
pub use solve::{solve_general, solve_spd, solve_spd_dense, DenseCholesky, DenseLu, SpdFactor};
pub use sparse::{galerkin_dense, galerkin_sparse, SparseMatrix};
