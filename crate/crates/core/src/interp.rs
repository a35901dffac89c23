//! Interpolation operators `P: R^nc -> R^n`.
//!
//! Dense operators hold one column per coarse variable, ordered like
//! `Splitting::coarse()`, with rows in the original (lexicographic) ordering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::linalg::eig::{gen_eig_sym, EigMode, EigOptions, EigenPairs, LinearOperator};
use crate::linalg::solve::SINGULAR_RTOL;
use crate::linalg::{galerkin_dense, DenseCholesky, DenseLu, SparseMatrix, SpdFactor};
use crate::problems::{InterpPattern, Splitting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpKind {
    Optimal,
    ClassicalOptimal,
    Ideal,
    GeneralizedIdeal,
    LeastSquares,
}

/// Dense interpolation with its provenance.
#[derive(Debug, Clone)]
pub struct Interp {
    pub p: DMatrix<f64>,
    pub kind: InterpKind,
}

impl Interp {
    pub fn nc(&self) -> usize {
        self.p.ncols()
    }

    /// Largest entry magnitude over the F-rows.
    pub fn max_abs_fine(&self, split: &Splitting) -> f64 {
        split
            .fine()
            .iter()
            .map(|&i| self.p.row(i).amax())
            .fold(0.0, f64::max)
    }
}

/// Optimal interpolation: the `nc` smallest `M̃`-orthonormal generalized
/// eigenvectors of `(A, M̃)`. Also returns `nc + 1` eigenpairs (when
/// available) so the caller can read `λ_{nc+1}`.
pub fn optimal_interp(
    a: &dyn LinearOperator,
    msymm: &dyn LinearOperator,
    nc: usize,
    opts: &EigOptions,
) -> Result<(Interp, EigenPairs)> {
    let n = a.dim();
    if nc == 0 || nc > n {
        return Err(Error::InvalidArgument(format!("nc = {nc} for n = {n}")));
    }
    let want = (nc + 1).min(n);
    let pairs = gen_eig_sym(a, msymm, want, EigMode::Smallest, opts)?;
    let p = pairs.vectors.columns(0, nc).into_owned();
    Ok((
        Interp {
            p,
            kind: InterpKind::Optimal,
        },
        pairs,
    ))
}

/// Rows of `p` at the coarse points.
pub fn coarse_rows(p: &DMatrix<f64>, split: &Splitting) -> DMatrix<f64> {
    let c = split.coarse();
    DMatrix::from_fn(c.len(), p.ncols(), |i, j| p[(c[i], j)])
}

/// Classical form `P̄ = P P_c^{-1}` with identity on the coarse rows.
///
/// Errors with [`Error::SingularPc`] when `P_c` is numerically singular.
pub fn classical_scale(p: &DMatrix<f64>, split: &Splitting) -> Result<DMatrix<f64>> {
    let nc = split.nc();
    if p.ncols() != nc || p.nrows() != split.n() {
        return Err(Error::DimensionMismatch(format!(
            "P is {}x{}, splitting has n = {}, nc = {nc}",
            p.nrows(),
            p.ncols(),
            split.n()
        )));
    }
    let pc = coarse_rows(p, split);
    let lu = DenseLu::factor(&pc).map_err(|e| match e {
        Error::Singular { condition } => Error::SingularPc { condition },
        other => other,
    })?;
    let mut pbar = lu.solve_right(p);
    for (k, &c) in split.coarse().iter().enumerate() {
        for j in 0..nc {
            pbar[(c, j)] = if j == k { 1.0 } else { 0.0 };
        }
    }
    Ok(pbar)
}

/// `W⋆ = -A_ff^{-1} A_fc` (dense `nf x nc`).
pub fn ideal_weights(a: &SparseMatrix, split: &Splitting, mode: ExecMode) -> Result<DMatrix<f64>> {
    let a_ff = a.extract_submatrix(split.fine(), split.fine())?;
    let a_fc = a.extract_submatrix(split.fine(), split.coarse())?;
    let factor = SpdFactor::sparse(&a_ff)?;
    let nf = split.nf();
    let nc = split.nc();
    let afc = a_fc.to_dense();
    let mut w = DMatrix::zeros(nf, nc);
    exec::for_each_chunk_mut(mode, w.as_mut_slice(), nf.max(1), |j, col| {
        col.copy_from_slice(afc.column(j).as_slice());
        factor.solve_in_place(col);
        col.iter_mut().for_each(|v| *v = -*v);
    });
    Ok(w)
}

/// Assembles `[W; I]` in the original ordering from F-row weights.
pub fn from_fine_weights(w: &DMatrix<f64>, split: &Splitting) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(split.n(), split.nc());
    for (k, &f) in split.fine().iter().enumerate() {
        p.row_mut(f).copy_from(&w.row(k));
    }
    for (k, &c) in split.coarse().iter().enumerate() {
        p[(c, k)] = 1.0;
    }
    p
}

/// Ideal interpolation `P_id = [W⋆; I]`.
pub fn ideal_interp(a: &SparseMatrix, split: &Splitting, mode: ExecMode) -> Result<Interp> {
    let w = ideal_weights(a, split, mode)?;
    Ok(Interp {
        p: from_fine_weights(&w, split),
        kind: InterpKind::Ideal,
    })
}

/// Canonical injections `S = [I; 0]` (F columns) and `Z = [0; I]` (C columns).
pub fn canonical_injections(split: &Splitting) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = split.n();
    let mut s = DMatrix::zeros(n, split.nf());
    for (k, &f) in split.fine().iter().enumerate() {
        s[(f, k)] = 1.0;
    }
    let mut z = DMatrix::zeros(n, split.nc());
    for (k, &c) in split.coarse().iter().enumerate() {
        z[(c, k)] = 1.0;
    }
    (s, z)
}

/// Generalized ideal interpolation `(I - S (S^T A S)^{-1} S^T A) Z`.
///
/// `S` (`n x ns`) spans the complement space and `Z` (`n x nc`) completes it
/// to a basis; the result is independent of the basis chosen for `range(S)`.
pub fn generalized_ideal(a: &SparseMatrix, s: &DMatrix<f64>, z: &DMatrix<f64>, mode: ExecMode) -> Result<Interp> {
    let n = a.n_rows();
    if s.nrows() != n || z.nrows() != n {
        return Err(Error::DimensionMismatch("S and Z need n rows".into()));
    }
    let sas = galerkin_dense(s, a, mode)?;
    let ch = DenseCholesky::factor(&sas).map_err(|_| Error::RankDeficient("S^T A S is singular".into()))?;
    let az = crate::linalg::sparse::sparse_times_dense(a, z, mode);
    let rhs = s.transpose() * az;
    let y = ch.solve_matrix(&rhs);
    let p = z - s * y;
    Ok(Interp {
        p,
        kind: InterpKind::GeneralizedIdeal,
    })
}

/// `X`-orthogonal projection `Π_X(P) = P (P^T X P)^{-1} P^T X` (dense `n x n`).
pub fn x_projection(p: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xp = x * p;
    let pxp = p.transpose() * &xp;
    let ch = DenseCholesky::factor(&pxp).map_err(|_| Error::RankDeficient("P^T X P is singular".into()))?;
    let y = ch.solve_matrix(&xp.transpose());
    Ok(p * y)
}

/// Optimal restriction `R_opt = P_c P_opt^T M̃` paired with `P̄`.
pub fn optimal_restriction(p_opt: &DMatrix<f64>, split: &Splitting, msymm: &DMatrix<f64>) -> DMatrix<f64> {
    let pc = coarse_rows(p_opt, split);
    pc * (p_opt.transpose() * msymm)
}

/// Least-squares interpolation fitted to test vectors.
///
/// For each F-row `i` with interpolatory set `C_i` the weights minimize
/// `Σ_k ω_k (v_k(i) - Σ_{j∈C_i} p_ij v_k(j))^2` with a ridge of
/// `ridge * trace` added to the normal equations. C-rows are identity.
pub fn ls_interp(
    tvs: &DMatrix<f64>,
    weights: &[f64],
    split: &Splitting,
    pattern: &InterpPattern,
    ridge: f64,
) -> Result<SparseMatrix> {
    let n = split.n();
    if tvs.nrows() != n || weights.len() != tvs.ncols() || pattern.rows.len() != n {
        return Err(Error::DimensionMismatch("least-squares interpolation inputs".into()));
    }
    let coarse = split.coarse();
    let mut trip = Vec::new();
    for i in 0..n {
        if split.is_coarse(i) {
            trip.push((i, split.local_index(i), 1.0));
            continue;
        }
        let set = &pattern.rows[i];
        if set.is_empty() {
            return Err(Error::EmptyInterpolatorySet(i));
        }
        let m = set.len();
        let mut g: DMatrix<f64> = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for (k, w) in weights.iter().enumerate() {
            let vals: Vec<f64> = set.iter().map(|&j| tvs[(coarse[j], k)]).collect();
            for a in 0..m {
                rhs[a] += w * vals[a] * tvs[(i, k)];
                for b in 0..m {
                    g[(a, b)] += w * vals[a] * vals[b];
                }
            }
        }
        let shift = ridge * g.trace().max(SINGULAR_RTOL);
        for a in 0..m {
            g[(a, a)] += shift;
        }
        let ch = DenseCholesky::factor(&g).map_err(|_| Error::RankDeficient(format!("row {i}")))?;
        let sol = ch.solve(rhs.as_slice());
        for (a, &j) in set.iter().enumerate() {
            trip.push((i, j, sol[a]));
        }
    }
    SparseMatrix::from_triplets(n, split.nc(), &trip)
}
