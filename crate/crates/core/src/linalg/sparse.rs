use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from raw CSR arrays, validating the layout invariants.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 || col_indices.len() != values.len() {
            return Err(Error::DimensionMismatch("CSR array lengths".into()));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::DimensionMismatch("CSR row offsets".into()));
        }
        for i in 0..n_rows {
            let (s, e) = (row_offsets[i], row_offsets[i + 1]);
            if s > e {
                return Err(Error::DimensionMismatch("decreasing row offsets".into()));
            }
            for k in s..e {
                if col_indices[k] >= n_cols {
                    return Err(Error::IndexOutOfRange {
                        index: col_indices[k],
                        dim: n_cols,
                    });
                }
                if k > s && col_indices[k] <= col_indices[k - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "row {i}: column indices not sorted and unique"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from (row, col, value) triplets; duplicates are summed in input order.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, j, _) in triplets {
            if i >= n_rows {
                return Err(Error::IndexOutOfRange { index: i, dim: n_rows });
            }
            if j >= n_cols {
                return Err(Error::IndexOutOfRange { index: j, dim: n_cols });
            }
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            entries[fill[i]] = (j, v);
            fill[i] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for i in 0..n_rows {
            let row = &mut entries[counts[i]..counts[i + 1]];
            // stable sort keeps duplicate summation order deterministic
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut acc = 0.0;
                while k < row.len() && row[k].0 == col {
                    acc += row[k].1;
                    k += 1;
                }
                col_indices.push(col);
                values.push(acc);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Converts a dense matrix, keeping every entry that is not exactly zero.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: a.nrows(),
            n_cols: a.ncols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x` with per-row left-to-right summation.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "spmv: matrix has {} columns, vector has {} entries",
                self.n_cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked `y = A x`; panics on dimension mismatch.
    #[inline]
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut r = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                r += v * y[*c];
            }
            acc += x[i] * r;
        }
        acc
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut fill = counts.clone();
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                col_indices[fill[*c]] = i;
                values[fill[*c]] = *v;
                fill[*c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[(i, *c)] = *v;
            }
        }
        d
    }

    /// Sparse product `self * other` (row-wise Gustavson).
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut acc = vec![0.0; other.n_cols];
        let mut marker = vec![usize::MAX; other.n_cols];
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for i in 0..self.n_rows {
            touched.clear();
            let (cols, vals) = self.row(i);
            for (k, a) in cols.iter().zip(vals) {
                let (c2, v2) = other.row(*k);
                for (j, b) in c2.iter().zip(v2) {
                    if marker[*j] != i {
                        marker[*j] = i;
                        acc[*j] = 0.0;
                        touched.push(*j);
                    }
                    acc[*j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `A(rows, cols)` with local indices following the order of the given sets.
    pub fn extract_submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<SparseMatrix> {
        check_index_set(rows, self.n_rows)?;
        let col_map = index_map(cols, self.n_cols)?;
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for &r in rows {
            buf.clear();
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                let local = col_map[*c];
                if local != usize::MAX {
                    buf.push((local, *v));
                }
            }
            buf.sort_by_key(|e| e.0);
            for &(c, v) in &buf {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: rows.len(),
            n_cols: cols.len(),
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(i, *c)).abs());
            }
            let (cols, vals) = t.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(i, *c)).abs());
            }
        }
        worst
    }

    /// Replaces each pair `(a_ij, a_ji)` by its mean so the matrix is exactly symmetric.
    pub fn symmetrize(&self) -> Result<SparseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::DimensionMismatch("symmetrize: non-square".into()));
        }
        let t = self.transpose();
        let mut trip = Vec::with_capacity(2 * self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                trip.push((i, *c, 0.5 * v));
            }
            let (cols, vals) = t.row(i);
            for (c, v) in cols.iter().zip(vals) {
                trip.push((i, *c, 0.5 * v));
            }
        }
        let mut s = SparseMatrix::from_triplets(self.n_rows, self.n_cols, &trip)?;
        // pair sums can differ in the last bit depending on summation order
        for i in 0..s.n_rows {
            let (s0, e0) = (s.row_offsets[i], s.row_offsets[i + 1]);
            for k in s0..e0 {
                let j = s.col_indices[k];
                if j < i {
                    let v = s.get(j, i);
                    s.values[k] = v;
                }
            }
        }
        Ok(s)
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// One norm (max absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.n_cols];
        for (c, v) in self.col_indices.iter().zip(&self.values) {
            sums[*c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Adds `alpha * B` (same shape).
    pub fn add_scaled(&self, alpha: f64, b: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_rows != b.n_rows || self.n_cols != b.n_cols {
            return Err(Error::DimensionMismatch("add_scaled".into()));
        }
        let mut trip = Vec::with_capacity(self.nnz() + b.nnz());
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            trip.extend(c.iter().zip(v).map(|(c, v)| (i, *c, *v)));
            let (c, v) = b.row(i);
            trip.extend(c.iter().zip(v).map(|(c, v)| (i, *c, alpha * v)));
        }
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &trip)
    }

    /// Half bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0;
        for i in 0..self.n_rows {
            for c in self.row(i).0 {
                b = b.max(i.abs_diff(*c));
            }
        }
        b
    }
}

fn check_index_set(set: &[usize], dim: usize) -> Result<()> {
    index_map(set, dim).map(|_| ())
}

/// Map from global index to position in `set`, `usize::MAX` when absent.
pub(crate) fn index_map(set: &[usize], dim: usize) -> Result<Vec<usize>> {
    let mut map = vec![usize::MAX; dim];
    for (pos, &g) in set.iter().enumerate() {
        if g >= dim {
            return Err(Error::IndexOutOfRange { index: g, dim });
        }
        if map[g] != usize::MAX {
            return Err(Error::DuplicateIndex(g));
        }
        map[g] = pos;
    }
    Ok(map)
}

/// Dense `A X` for a sparse `A`, column by column.
pub fn sparse_times_dense(a: &SparseMatrix, x: &DMatrix<f64>, mode: ExecMode) -> DMatrix<f64> {
    assert_eq!(a.n_cols(), x.nrows());
    let n = a.n_rows();
    let mut out = DMatrix::zeros(n, x.ncols());
    exec::for_each_chunk_mut(mode, out.as_mut_slice(), n.max(1), |j, col| {
        a.spmv_into(x.column(j).as_slice(), col);
    });
    out
}

/// Galerkin triple product `P^T A P` for sparse `P`, symmetrized exactly.
pub fn galerkin_sparse(p: &SparseMatrix, a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.n_rows() != a.n_cols() || p.n_rows() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "galerkin: P is {}x{}, A is {}x{}",
            p.n_rows(),
            p.n_cols(),
            a.n_rows(),
            a.n_cols()
        )));
    }
    let ap = a.matmul(p)?;
    let pt = p.transpose();
    pt.matmul(&ap)?.symmetrize()
}

/// Galerkin triple product `P^T A P` for dense `P`; the result is symmetric bitwise.
pub fn galerkin_dense(p: &DMatrix<f64>, a: &SparseMatrix, mode: ExecMode) -> Result<DMatrix<f64>> {
    if a.n_rows() != a.n_cols() || p.nrows() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "galerkin: P is {}x{}, A is {}x{}",
            p.nrows(),
            p.ncols(),
            a.n_rows(),
            a.n_cols()
        )));
    }
    let ap = sparse_times_dense(a, p, mode);
    let mut ac = p.transpose() * ap;
    let m = ac.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (ac[(i, j)] + ac[(j, i)]);
            ac[(i, j)] = v;
            ac[(j, i)] = v;
        }
    }
    Ok(ac)
}


#[cfg(test)]
pub(crate) use tests::laplace_1d;
