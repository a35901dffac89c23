//! Two-grid and bootstrap algebraic multigrid analysis.
//!
//! The crate builds cell-centered finite volume discretizations of
//! jump-coefficient diffusion problems, constructs optimal, ideal and
//! least-squares interpolation operators, and measures two-grid and
//! multilevel convergence with dense references and matrix-free estimators.
//!
//! Module map:
//! - [`linalg`]: CSR matrices, direct solvers, generalized eigensolver, I/O.
//! - [`problems`]: coefficient fields, assembly, coarsenings, block partitions.
//! - [`smoothers`]: Gauss-Seidel variants, F-relaxation, block-factorized smoother.
//! - [`interp`]: optimal, classical-optimal, ideal, generalized-ideal and LS interpolation.
//! - [`maxvol`]: greedy maximal-volume selection of coarse variables.
//! - [`analysis`]: two-grid operators, rate estimators, CR measures.
//! - [`bamg`]: bootstrap setup, multilevel eigensolver, solve-phase rates.
//! - [`reference`]: published rates used as comparison targets.

pub mod analysis;
pub mod bamg;
pub mod error;
pub mod exec;
pub mod interp;
pub mod linalg;
pub mod maxvol;
pub mod problems;
pub mod reference;
pub mod rng;
pub mod smoothers;

pub use error::{Error, Result};
pub use exec::ExecMode;
