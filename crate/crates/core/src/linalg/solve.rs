//! Direct solvers: envelope (skyline) Cholesky for sparse SPD matrices, dense
//! Cholesky and partially pivoted LU, plus a Jacobi-preconditioned CG.

use nalgebra::{DMatrix, DVector};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Relative pivot size below which a factorization is reported singular.
pub const SINGULAR_RTOL: f64 = 1e-14;

/// Cholesky factor stored by rows over the lower envelope of the matrix.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(Error::DimensionMismatch("Cholesky of non-square matrix".into()));
        }
        let mut first = vec![0; n];
        for i in 0..n {
            let cols = a.row(i).0;
            first[i] = cols.first().map_or(i, |&c| c.min(i));
        }
        let mut offsets = vec![0; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offsets[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c <= i {
                    data[offsets[i] + c - first[i]] = *v;
                }
            }
        }
        let max_diag = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let fi = first[i];
            let oi = offsets[i];
            for j in fi..i {
                let fj = first[j];
                let oj = offsets[j];
                let start = fi.max(fj);
                let mut s = data[oi + j - fi];
                for k in start..j {
                    s -= data[oi + k - fi] * data[oj + k - fj];
                }
                data[oi + j - fi] = s / data[oj + j - fj];
            }
            let mut d = data[oi + i - fi];
            for k in fi..i {
                let l = data[oi + k - fi];
                d -= l * l;
            }
            if !(d > SINGULAR_RTOL * max_diag) || !d.is_finite() {
                return Err(Error::NotSpd { row: i, pivot: d });
            }
            data[oi + i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            first,
            offsets,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.data[self.offsets[i] + j - self.first[i]]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let mut s = b[i];
            for k in self.first[i]..i {
                s -= self.l(i, k) * b[k];
            }
            b[i] = s / self.l(i, i);
        }
        for i in (0..self.n).rev() {
            b[i] /= self.l(i, i);
            let bi = b[i];
            for k in self.first[i]..i {
                b[k] -= self.l(i, k) * bi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Dense lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    l: DMatrix<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("Cholesky of non-square matrix".into()));
        }
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
        let mut l = a.clone();
        for j in 1..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        // left-looking, column-major: column j -= sum_k l[j,k] * column k
        let data = l.as_mut_slice();
        for j in 0..n {
            for k in 0..j {
                let ljk = data[k * n + j];
                if ljk == 0.0 {
                    continue;
                }
                let (head, tail) = data.split_at_mut(j * n);
                let colk = &head[k * n + j..k * n + n];
                let colj = &mut tail[j..n];
                for (x, y) in colj.iter_mut().zip(colk) {
                    *x -= ljk * y;
                }
            }
            let d = data[j * n + j];
            if !(d > SINGULAR_RTOL * max_diag) || !d.is_finite() {
                return Err(Error::NotSpd { row: j, pivot: d });
            }
            let d = d.sqrt();
            data[j * n + j] = d;
            for x in &mut data[j * n + j + 1..j * n + n] {
                *x /= d;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.nrows();
        assert_eq!(b.len(), n);
        let l = self.l.as_slice();
        for k in 0..n {
            let col = &l[k * n..(k + 1) * n];
            b[k] /= col[k];
            let bk = b[k];
            for i in k + 1..n {
                b[i] -= col[i] * bk;
            }
        }
        for i in (0..n).rev() {
            let col = &l[i * n..(i + 1) * n];
            let mut s = b[i];
            for k in i + 1..n {
                s -= col[k] * b[k];
            }
            b[i] = s / col[i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }
}

/// Partially pivoted LU for general square matrices.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    a: DMatrix<f64>,
    n: usize,
}

impl DenseLu {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("LU of non-square matrix".into()));
        }
        let lu = a.clone().lu();
        let u = lu.u();
        let umax = u.diagonal().amax();
        let umin = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if n > 0 && !(umin > SINGULAR_RTOL * umax) {
            let condition = if umin > 0.0 { umax / umin } else { f64::INFINITY };
            return Err(Error::Singular { condition });
        }
        Ok(Self { lu, a: a.clone(), n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(b);
        self.lu.solve(&v).expect("nonsingular by construction").as_slice().to_vec()
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("nonsingular by construction")
    }

    /// Solves `X A = B` (right division), i.e. `A^T X^T = B^T`.
    pub fn solve_right(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let lut = self.a.transpose().lu();
        lut.solve(&b.transpose())
            .expect("nonsingular by construction")
            .transpose()
    }

    pub fn log_abs_det(&self) -> f64 {
        self.lu.u().diagonal().iter().map(|v| v.abs().ln()).sum()
    }
}

/// SPD factorization for either storage kind.
#[derive(Debug, Clone)]
pub enum SpdFactor {
    Skyline(SkylineCholesky),
    Dense(DenseCholesky),
}

impl SpdFactor {
    pub fn sparse(a: &SparseMatrix) -> Result<Self> {
        SkylineCholesky::factor(a).map(SpdFactor::Skyline)
    }

    pub fn dense(a: &DMatrix<f64>) -> Result<Self> {
        DenseCholesky::factor(a).map(SpdFactor::Dense)
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdFactor::Skyline(f) => f.dim(),
            SpdFactor::Dense(f) => f.dim(),
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            SpdFactor::Skyline(f) => f.solve_in_place(b),
            SpdFactor::Dense(f) => f.solve_in_place(b),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Direct SPD solve of a sparse system.
pub fn solve_spd(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch("solve_spd: rhs length".into()));
    }
    Ok(SkylineCholesky::factor(a)?.solve(b))
}

/// Direct SPD solve of a dense system.
pub fn solve_spd_dense(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch("solve_spd: rhs length".into()));
    }
    Ok(DenseCholesky::factor(a)?.solve(b))
}

/// Direct solve of a general dense system with partial pivoting.
pub fn solve_general(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch("solve: rhs length".into()));
    }
    Ok(DenseLu::factor(a)?.solve(b))
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess,
/// running exactly `iters` steps unless the residual vanishes first.
pub fn pcg_jacobi(a: &SparseMatrix, b: &[f64], iters: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let d = a.diagonal();
    if let Some(i) = d.iter().position(|v| *v == 0.0) {
        return Err(Error::ZeroDiagonal(i));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&d).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..iters {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgBreakdown(it));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= 1e-15 * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(x)
}

/// Jacobi-preconditioned CG to a relative residual tolerance.
pub fn pcg_jacobi_tol(a: &SparseMatrix, b: &[f64], rtol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let d = a.diagonal();
    if let Some(i) = d.iter().position(|v| *v == 0.0) {
        return Err(Error::ZeroDiagonal(i));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut z: Vec<f64> = r.iter().zip(&d).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgBreakdown(it));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            return Ok((x, it + 1));
        }
        for i in 0..n {
            z[i] = r[i] / d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, max_iter))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// 2-norm condition number from singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
