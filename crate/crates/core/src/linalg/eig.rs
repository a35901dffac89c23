//! Symmetric-definite generalized eigenproblems `A x = λ B x`.
//!
//! Up to [`EigOptions::dense_threshold`] both operators are assembled densely
//! by probing unit vectors and reduced with a Cholesky factor of `B`. Larger
//! problems use block inverse iteration with Rayleigh-Ritz in the
//! `B`-inner product.

use nalgebra::DMatrix;

use super::solve::{dot, DenseCholesky, SpdFactor};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::rng;

/// A square linear map applied matrix-free.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// A direct solver for the operator, when one is cheaply available.
    fn factor(&self) -> Option<SpdFactor> {
        None
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }

    fn factor(&self) -> Option<SpdFactor> {
        SpdFactor::sparse(self).ok()
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, xj) in x.iter().enumerate() {
            if *xj != 0.0 {
                let col = &self.as_slice()[j * n..(j + 1) * n];
                for (yi, c) in y.iter_mut().zip(col) {
                    *yi += c * xj;
                }
            }
        }
    }

    fn factor(&self) -> Option<SpdFactor> {
        SpdFactor::dense(self).ok()
    }
}

/// The identity on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Dense matrix of an operator, column `j` = `op(e_j)`.
pub fn assemble_dense(op: &dyn LinearOperator, mode: ExecMode) -> DMatrix<f64> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    exec::for_each_chunk_mut(mode, out.as_mut_slice(), n.max(1), |j, col| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        op.apply(&e, col);
    });
    out
}

/// Sparse matrix of an operator by probing; only exact zeros are dropped.
pub fn assemble_sparse(op: &dyn LinearOperator, mode: ExecMode) -> SparseMatrix {
    let n = op.dim();
    let cols: Vec<Vec<(usize, f64)>> = exec::map_range(mode, n, |j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let mut y = vec![0.0; n];
        op.apply(&e, &mut y);
        y.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect()
    });
    let mut trip = Vec::new();
    for (j, col) in cols.into_iter().enumerate() {
        trip.extend(col.into_iter().map(|(i, v)| (i, j, v)));
    }
    SparseMatrix::from_triplets(n, n, &trip).expect("indices in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigMode {
    Smallest,
    Full,
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    pub dense_threshold: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            dense_threshold: 4096,
            tol: 1e-10,
            max_iter: 500,
            seed: 0,
            exec: ExecMode::auto(),
        }
    }
}

/// Eigenvalues ascending with `B`-orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest `‖A v - λ B v‖ / (‖A‖ ‖v‖)` over all pairs, `‖A‖` estimated by the
    /// infinity norm of the dense assembly.
    pub fn max_relative_residual(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let anorm = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let av = a * &self.vectors;
        let bv = b * &self.vectors;
        let mut worst: f64 = 0.0;
        for (i, lam) in self.values.iter().enumerate() {
            let r = av.column(i) - bv.column(i) * *lam;
            let vn = self.vectors.column(i).norm();
            worst = worst.max(r.norm() / (anorm * vn));
        }
        worst
    }
}

/// Generalized symmetric eigenproblem for `A` (symmetric PSD) and `B` (SPD).
pub fn gen_eig_sym(
    a: &dyn LinearOperator,
    b: &dyn LinearOperator,
    k: usize,
    mode: EigMode,
    opts: &EigOptions,
) -> Result<EigenPairs> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "pencil dimensions {} and {}",
            n,
            b.dim()
        )));
    }
    let k = match mode {
        EigMode::Full => n,
        EigMode::Smallest => k,
    };
    if k > n {
        return Err(Error::InvalidArgument(format!("requested {k} pairs of {n}")));
    }
    if n <= opts.dense_threshold {
        let ad = assemble_dense(a, opts.exec);
        let bd = assemble_dense(b, opts.exec);
        let mut pairs = gen_eig_dense(&ad, &bd)?;
        if k < n {
            pairs.values.truncate(k);
            pairs.vectors = pairs.vectors.columns(0, k).into_owned();
        }
        Ok(pairs)
    } else if mode == EigMode::Full {
        Err(Error::TooLarge {
            size: n,
            limit: opts.dense_threshold,
        })
    } else {
        block_inverse_iteration(a, b, k, opts)
    }
}

/// All eigenpairs of a dense symmetric-definite pencil.
pub fn gen_eig_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<EigenPairs> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch("dense pencil".into()));
    }
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let chol = DenseCholesky::factor(b)?;
    let l = chol.l();
    let linv_a = l.solve_lower_triangular(a).expect("nonsingular factor");
    let mut c = l
        .solve_lower_triangular(&linv_a.transpose())
        .expect("nonsingular factor");
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let mut vectors = l
        .transpose()
        .solve_upper_triangular(&q)
        .expect("nonsingular factor");
    normalize_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

/// Flips each column so its largest-magnitude entry is positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for x in col.iter() {
            if x.abs() > best.abs() + 1e-12 * best.abs() {
                best = *x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

fn apply_cols(op: &dyn LinearOperator, x: &DMatrix<f64>, mode: ExecMode) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, x.ncols());
    exec::for_each_chunk_mut(mode, out.as_mut_slice(), n.max(1), |j, col| {
        op.apply(x.column(j).as_slice(), col);
    });
    out
}

/// Matrix-free CG used when `A` has no direct factorization.
struct OperatorCg<'a>(&'a dyn LinearOperator);

fn cg_operator(op: &dyn LinearOperator, b: &[f64], rtol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let bnorm = rr.sqrt();
    if bnorm == 0.0 {
        return x;
    }
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= rtol * bnorm {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

impl OperatorCg<'_> {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        cg_operator(self.0, b, 1e-13, 10 * b.len())
    }
}

fn block_inverse_iteration(
    a: &dyn LinearOperator,
    b: &dyn LinearOperator,
    k: usize,
    opts: &EigOptions,
) -> Result<EigenPairs> {
    let n = a.dim();
    let p = (k + (k / 2).max(4)).min(n);
    let factor = a.factor();
    let fallback = OperatorCg(a);
    let solve = |rhs: &[f64]| -> Vec<f64> {
        match &factor {
            Some(f) => f.solve(rhs),
            None => fallback.solve(rhs),
        }
    };

    let mut r = rng::stream(opts.seed, rng::streams::EIGEN_START);
    let mut x = DMatrix::from_fn(n, p, |_, _| 0.0);
    for j in 0..p {
        let v = rng::uniform_vec(&mut r, n);
        x.column_mut(j).copy_from_slice(&v);
    }

    // ‖A‖ by a few power steps, for the relative residual test
    let mut v = rng::uniform_vec(&mut r, n);
    let mut av = vec![0.0; n];
    let mut anorm = 0.0;
    for _ in 0..30 {
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        a.apply(&v, &mut av);
        anorm = dot(&av, &av).sqrt();
        std::mem::swap(&mut v, &mut av);
    }
    let anorm = anorm.max(f64::MIN_POSITIVE);

    let mut worst = f64::INFINITY;
    for it in 0..opts.max_iter {
        let bx = apply_cols(b, &x, opts.exec);
        let cols: Vec<Vec<f64>> = exec::map_range(opts.exec, p, |j| solve(bx.column(j).as_slice()));
        let mut y = DMatrix::zeros(n, p);
        for (j, c) in cols.iter().enumerate() {
            y.column_mut(j).copy_from_slice(c);
        }
        let ay = apply_cols(a, &y, opts.exec);
        let by = apply_cols(b, &y, opts.exec);
        let mut as_ = y.transpose() * &ay;
        let mut bs = y.transpose() * &by;
        symmetrize_dense(&mut as_);
        symmetrize_dense(&mut bs);
        // rescale the basis to keep the small pencil well scaled
        let scale: Vec<f64> = (0..p).map(|i| 1.0 / bs[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
        for i in 0..p {
            for j in 0..p {
                as_[(i, j)] *= scale[i] * scale[j];
                bs[(i, j)] *= scale[i] * scale[j];
            }
        }
        let small = gen_eig_dense(&as_, &bs).map_err(|_| Error::NotSpd { row: 0, pivot: 0.0 })?;
        let mut q = small.vectors;
        for i in 0..p {
            for j in 0..p {
                q[(i, j)] *= scale[i];
            }
        }
        x = &y * &q;
        let ax = &ay * &q;
        let bxn = &by * &q;
        worst = 0.0;
        for i in 0..k {
            let res = ax.column(i) - bxn.column(i) * small.values[i];
            worst = worst.max(res.norm() / (anorm * x.column(i).norm()));
        }
        if worst <= opts.tol {
            let mut vectors = x.columns(0, k).into_owned();
            normalize_signs(&mut vectors);
            let _ = it;
            return Ok(EigenPairs {
                values: small.values[..k].to_vec(),
                vectors,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: worst,
    })
}

fn symmetrize_dense(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of a sparse SPD matrix by inverse iteration; used for
/// condition estimates when the matrix is too large to assemble densely.
pub fn lambda_min_sparse(a: &SparseMatrix, iters: usize, seed: u64) -> Result<f64> {
    let f = SpdFactor::sparse(a)?;
    let n = a.n_rows();
    let mut r = rng::stream(seed, rng::streams::EIGEN_START);
    let mut v = rng::uniform_vec(&mut r, n);
    let mut lam = 0.0;
    for _ in 0..iters {
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let w = f.solve(&v);
        lam = 1.0 / dot(&v, &w);
        v = w;
    }
    Ok(lam)
}

/// Largest eigenvalue of a symmetric operator by power iteration.
pub fn lambda_max_power(a: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    let n = a.dim();
    let mut r = rng::stream(seed, rng::streams::EIGEN_START);
    let mut v = rng::uniform_vec(&mut r, n);
    let mut av = vec![0.0; n];
    let mut lam = 0.0;
    for _ in 0..iters {
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        a.apply(&v, &mut av);
        lam = dot(&v, &av);
        std::mem::swap(&mut v, &mut av);
    }
    lam
}
