//! Relaxation schemes `x <- x + M^{-1}(b - A x)` and their symmetrizations.
//!
//! Every smoother here assumes a symmetric `A`. Gauss-Seidel variants are
//! (block) triangular sweeps in a given block order; the transpose of a sweep
//! is the same sweep run in reverse order. The symmetrized smoother
//! `M̃ = M (M + M^T - A)^{-1} M^T` is sparse for sweeps (the middle factor is
//! the block diagonal of `A`) and assembled densely otherwise. It satisfies
//! `I - M̃^{-1} A = (I - M^{-T} A)(I - M^{-1} A)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::linalg::eig::assemble_dense;
use crate::linalg::solve::SINGULAR_RTOL;
use crate::linalg::{DenseCholesky, LinearOperator, SparseMatrix, SpdFactor};
use crate::problems::{block_partition, BlockPartition, Grid, Splitting};

/// Largest dimension for which dense symmetrizations are formed.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    GsForward,
    GsBackward,
    GsSymmetric,
    BlockGsRedblack,
    Hb,
}

/// How the F-block of the block-factorized smoother is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HbInner {
    /// Forward Gauss-Seidel on `A_ff`.
    Gs,
    /// Exact solve with `A_ff`.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherSpec {
    pub kind: SmootherKind,
    /// Block edge length for block Gauss-Seidel.
    pub block: usize,
    pub hb_inner: HbInner,
    /// Scaling of the C-block of the block-factorized smoother; `None` uses
    /// `2 ‖S_A‖_1` with `S_A` the Schur complement.
    pub tau: Option<f64>,
}

impl Default for SmootherSpec {
    fn default() -> Self {
        Self {
            kind: SmootherKind::GsForward,
            block: 5,
            hb_inner: HbInner::Gs,
            tau: None,
        }
    }
}

impl SmootherSpec {
    pub fn of(kind: SmootherKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
enum BlockSolve {
    Point(f64),
    Dense(DenseCholesky),
}

/// A (block) Gauss-Seidel sweep: blocks are visited in `order`, each block
/// solved exactly against the latest values of earlier blocks.
#[derive(Debug, Clone)]
pub struct Sweep {
    a: SparseMatrix,
    blocks: Vec<Vec<usize>>,
    order: Vec<usize>,
    /// Position in `order` of the block containing each unknown.
    rank: Vec<usize>,
    solves: Vec<BlockSolve>,
}

impl Sweep {
    pub fn new(a: &SparseMatrix, blocks: Vec<Vec<usize>>, order: Vec<usize>) -> Result<Self> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(Error::DimensionMismatch("sweep on non-square matrix".into()));
        }
        if order.len() != blocks.len() {
            return Err(Error::InvalidArgument("block order length".into()));
        }
        let mut rank = vec![usize::MAX; n];
        let mut seen = vec![false; blocks.len()];
        for (pos, &b) in order.iter().enumerate() {
            if b >= blocks.len() || seen[b] {
                return Err(Error::InvalidArgument("block order is not a permutation".into()));
            }
            seen[b] = true;
            for &p in &blocks[b] {
                if p >= n {
                    return Err(Error::IndexOutOfRange { index: p, dim: n });
                }
                if rank[p] != usize::MAX {
                    return Err(Error::DuplicateIndex(p));
                }
                rank[p] = pos;
            }
        }
        if let Some(p) = rank.iter().position(|r| *r == usize::MAX) {
            return Err(Error::InvalidArgument(format!("unknown {p} not covered by any block")));
        }
        let solves = blocks
            .iter()
            .map(|cells| {
                if cells.len() == 1 {
                    let d = a.get(cells[0], cells[0]);
                    if d == 0.0 {
                        return Err(Error::ZeroDiagonal(cells[0]));
                    }
                    Ok(BlockSolve::Point(d))
                } else {
                    let m = cells.len();
                    let ab = DMatrix::from_fn(m, m, |i, j| a.get(cells[i], cells[j]));
                    DenseCholesky::factor(&ab).map(BlockSolve::Dense)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            a: a.clone(),
            blocks,
            order,
            rank,
            solves,
        })
    }

    /// Pointwise Gauss-Seidel in lexicographic (`forward`) or reverse order.
    pub fn pointwise(a: &SparseMatrix, forward: bool) -> Result<Self> {
        let n = a.n_rows();
        let blocks = (0..n).map(|p| vec![p]).collect();
        let order = if forward {
            (0..n).collect()
        } else {
            (0..n).rev().collect()
        };
        Self::new(a, blocks, order)
    }

    /// Block Gauss-Seidel visiting red blocks first, then black ones.
    pub fn red_black_blocks(a: &SparseMatrix, partition: &BlockPartition) -> Result<Self> {
        Self::new(a, partition.blocks.clone(), partition.red_black_order())
    }

    pub fn dim(&self) -> usize {
        self.a.n_rows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The sweep with the block order reversed, i.e. `M^T`.
    pub fn reversed(&self) -> Self {
        let order: Vec<usize> = self.order.iter().rev().copied().collect();
        let nb = order.len();
        let rank = self.rank.iter().map(|r| nb - 1 - r).collect();
        Self {
            a: self.a.clone(),
            blocks: self.blocks.clone(),
            order,
            rank,
            solves: self.solves.clone(),
        }
    }

    fn solve_block(&self, b: usize, t: &mut [f64]) {
        match &self.solves[b] {
            BlockSolve::Point(d) => t[self.blocks[b][0]] /= d,
            BlockSolve::Dense(ch) => {
                let cells = &self.blocks[b];
                let mut loc: Vec<f64> = cells.iter().map(|&p| t[p]).collect();
                ch.solve_in_place(&mut loc);
                for (&p, v) in cells.iter().zip(loc) {
                    t[p] = v;
                }
            }
        }
    }

    /// Triangular solve; `later` selects the backward (transposed) direction.
    fn substitute(&self, r: &[f64], later: bool) -> Vec<f64> {
        let mut x = r.to_vec();
        let visit = |b: usize, x: &mut Vec<f64>| {
            for &p in &self.blocks[b] {
                let rp = self.rank[p];
                let (cols, vals) = self.a.row(p);
                let mut s = r[p];
                for (q, v) in cols.iter().zip(vals) {
                    let rq = self.rank[*q];
                    if (!later && rq < rp) || (later && rq > rp) {
                        s -= v * x[*q];
                    }
                }
                x[p] = s;
            }
            self.solve_block(b, x);
        };
        if later {
            for &b in self.order.iter().rev() {
                visit(b, &mut x);
            }
        } else {
            for &b in &self.order {
                visit(b, &mut x);
            }
        }
        x
    }

    pub fn apply_minv(&self, r: &[f64]) -> Vec<f64> {
        self.substitute(r, false)
    }

    pub fn apply_minv_t(&self, r: &[f64]) -> Vec<f64> {
        self.substitute(r, true)
    }

    fn triangular_product(&self, x: &[f64], upper: bool) -> Vec<f64> {
        (0..self.dim())
            .map(|p| {
                let rp = self.rank[p];
                let (cols, vals) = self.a.row(p);
                cols.iter()
                    .zip(vals)
                    .filter(|(q, _)| {
                        let rq = self.rank[**q];
                        if upper {
                            rq >= rp
                        } else {
                            rq <= rp
                        }
                    })
                    .map(|(q, v)| v * x[*q])
                    .sum()
            })
            .collect()
    }

    pub fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        self.triangular_product(x, false)
    }

    pub fn apply_mt(&self, x: &[f64]) -> Vec<f64> {
        self.triangular_product(x, true)
    }

    /// Block-diagonal solve with the diagonal blocks of `A`.
    pub fn apply_block_diag_inv(&self, r: &[f64]) -> Vec<f64> {
        let mut x = r.to_vec();
        for b in 0..self.blocks.len() {
            self.solve_block(b, &mut x);
        }
        x
    }

    /// The explicit lower factor `M` (entries of `A` with block rank not after the row's).
    pub fn m_matrix(&self) -> SparseMatrix {
        let n = self.dim();
        let mut trip = Vec::new();
        for p in 0..n {
            let (cols, vals) = self.a.row(p);
            for (q, v) in cols.iter().zip(vals) {
                if self.rank[*q] <= self.rank[p] {
                    trip.push((p, *q, *v));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, &trip).expect("indices in range")
    }

    /// Inverse of the block diagonal of `A` as a sparse matrix.
    fn block_diag_inverse(&self) -> SparseMatrix {
        let n = self.dim();
        let mut trip = Vec::new();
        for (b, cells) in self.blocks.iter().enumerate() {
            match &self.solves[b] {
                BlockSolve::Point(d) => trip.push((cells[0], cells[0], 1.0 / d)),
                BlockSolve::Dense(ch) => {
                    let m = cells.len();
                    let inv = ch.solve_matrix(&DMatrix::identity(m, m));
                    for i in 0..m {
                        for j in 0..m {
                            trip.push((cells[i], cells[j], inv[(i, j)]));
                        }
                    }
                }
            }
        }
        SparseMatrix::from_triplets(n, n, &trip).expect("indices in range")
    }

    /// `M D_B^{-1} M^T`, the symmetrization of the sweep (sparse).
    pub fn symmetrized(&self) -> Result<SparseMatrix> {
        let m = self.m_matrix();
        let dinv = self.block_diag_inverse();
        m.matmul(&dinv)?.matmul(&m.transpose())?.symmetrize()
    }

    /// The same sweep on the submatrix `A_ss` for an index set `s`,
    /// with blocks intersected with `s` and the block order kept.
    pub fn restricted(&self, set: &[usize]) -> Result<Self> {
        let n = self.dim();
        let map = crate::linalg::sparse::index_map(set, n)?;
        let sub = self.a.extract_submatrix(set, set)?;
        let mut blocks = Vec::new();
        for &b in &self.order {
            let cells: Vec<usize> = self.blocks[b]
                .iter()
                .filter(|p| map[**p] != usize::MAX)
                .map(|p| map[*p])
                .collect();
            if !cells.is_empty() {
                blocks.push(cells);
            }
        }
        let order = (0..blocks.len()).collect();
        Self::new(&sub, blocks, order)
    }
}

/// Block-factorized smoother
/// `M = [[M_ff, 0], [A_cf, τ I]] [[I, M_ff^{-1} A_fc], [0, I]]`
/// in the F/C ordering of a splitting.
#[derive(Debug, Clone)]
pub struct HbSmoother {
    a: SparseMatrix,
    split: Splitting,
    a_fc: SparseMatrix,
    a_cf: SparseMatrix,
    inner: HbFine,
    tau: f64,
    transposed: bool,
}

#[derive(Debug, Clone)]
enum HbFine {
    Exact { a_ff: SparseMatrix, factor: SpdFactor },
    Sweep(Sweep),
}

impl HbFine {
    fn minv(&self, r: &[f64]) -> Vec<f64> {
        match self {
            HbFine::Exact { factor, .. } => factor.solve(r),
            HbFine::Sweep(s) => s.apply_minv(r),
        }
    }

    fn minv_t(&self, r: &[f64]) -> Vec<f64> {
        match self {
            HbFine::Exact { factor, .. } => factor.solve(r),
            HbFine::Sweep(s) => s.apply_minv_t(r),
        }
    }

    fn m(&self, x: &[f64]) -> Vec<f64> {
        match self {
            HbFine::Exact { a_ff, .. } => a_ff.spmv(x).expect("dimensions"),
            HbFine::Sweep(s) => s.apply_m(x),
        }
    }

    fn mt(&self, x: &[f64]) -> Vec<f64> {
        match self {
            HbFine::Exact { a_ff, .. } => a_ff.spmv(x).expect("dimensions"),
            HbFine::Sweep(s) => s.apply_mt(x),
        }
    }
}

fn axpy_into(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl HbSmoother {
    pub fn new(a: &SparseMatrix, split: &Splitting, inner: HbInner, tau: Option<f64>) -> Result<Self> {
        let a_ff = a.extract_submatrix(split.fine(), split.fine())?;
        let a_fc = a.extract_submatrix(split.fine(), split.coarse())?;
        let a_cf = a.extract_submatrix(split.coarse(), split.fine())?;
        let fine = match inner {
            HbInner::Exact => HbFine::Exact {
                factor: SpdFactor::sparse(&a_ff)?,
                a_ff,
            },
            HbInner::Gs => HbFine::Sweep(Sweep::pointwise(&a_ff, true)?),
        };
        let mut hb = Self {
            a: a.clone(),
            split: split.clone(),
            a_fc,
            a_cf,
            inner: fine,
            tau: 1.0,
            transposed: false,
        };
        hb.tau = match tau {
            Some(t) if t > 0.0 => t,
            Some(t) => return Err(Error::InvalidArgument(format!("tau must be positive, got {t}"))),
            None => 2.0 * schur_complement(a, split)?.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max),
        };
        Ok(hb)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn split(&self) -> &Splitting {
        &self.split
    }

    fn scatter(&self, xf: &[f64], xc: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.split.n()];
        for (p, v) in self.split.fine().iter().zip(xf) {
            x[*p] = *v;
        }
        for (p, v) in self.split.coarse().iter().zip(xc) {
            x[*p] = *v;
        }
        x
    }

    fn minv(&self, r: &[f64]) -> Vec<f64> {
        let rf = self.split.gather_fine(r);
        let rc = self.split.gather_coarse(r);
        let yf = self.inner.minv(&rf);
        let mut xc = rc;
        axpy_into(&mut xc, -1.0, &self.a_cf.spmv(&yf).expect("dimensions"));
        xc.iter_mut().for_each(|v| *v /= self.tau);
        let mut xf = yf;
        axpy_into(&mut xf, -1.0, &self.inner.minv(&self.a_fc.spmv(&xc).expect("dimensions")));
        self.scatter(&xf, &xc)
    }

    fn minv_t(&self, r: &[f64]) -> Vec<f64> {
        let rf = self.split.gather_fine(r);
        let rc = self.split.gather_coarse(r);
        let mut xc = rc;
        axpy_into(&mut xc, -1.0, &self.a_cf.spmv(&self.inner.minv_t(&rf)).expect("dimensions"));
        xc.iter_mut().for_each(|v| *v /= self.tau);
        let mut zf = rf;
        axpy_into(&mut zf, -1.0, &self.a_fc.spmv(&xc).expect("dimensions"));
        let xf = self.inner.minv_t(&zf);
        self.scatter(&xf, &xc)
    }

    fn m(&self, x: &[f64], transposed: bool) -> Vec<f64> {
        let xf = self.split.gather_fine(x);
        let xc = self.split.gather_coarse(x);
        let afc_xc = self.a_fc.spmv(&xc).expect("dimensions");
        let (mut yf, inner_c) = if transposed {
            (self.inner.mt(&xf), self.inner.minv_t(&afc_xc))
        } else {
            (self.inner.m(&xf), self.inner.minv(&afc_xc))
        };
        axpy_into(&mut yf, 1.0, &afc_xc);
        let mut yc = self.a_cf.spmv(&xf).expect("dimensions");
        axpy_into(&mut yc, 1.0, &self.a_cf.spmv(&inner_c).expect("dimensions"));
        axpy_into(&mut yc, self.tau, &xc);
        self.scatter(&yf, &yc)
    }
}

/// Dense Schur complement `A_cc - A_cf A_ff^{-1} A_fc`.
pub fn schur_complement(a: &SparseMatrix, split: &Splitting) -> Result<DMatrix<f64>> {
    let a_ff = a.extract_submatrix(split.fine(), split.fine())?;
    let a_fc = a.extract_submatrix(split.fine(), split.coarse())?;
    let a_cc = a.extract_submatrix(split.coarse(), split.coarse())?.to_dense();
    let factor = SpdFactor::sparse(&a_ff)?;
    let nc = split.nc();
    let afc_d = a_fc.to_dense();
    let mut s = a_cc;
    for j in 0..nc {
        let z = factor.solve(afc_d.column(j).as_slice());
        for i in 0..nc {
            // (A_cf z)_i = (A_fc^T z)_i
            s[(i, j)] -= afc_d.column(i).dot(&nalgebra::DVector::from_column_slice(&z));
        }
    }
    Ok(s)
}

/// A relaxation scheme for a fixed symmetric matrix.
#[derive(Debug, Clone)]
pub enum Smoother {
    Sweep(Sweep),
    /// Forward sweep followed by its reverse.
    Symmetric(Sweep),
    Hb(Box<HbSmoother>),
}

impl Smoother {
    /// Builds the smoother described by `spec` for `a`; block smoothers need
    /// the grid, the block-factorized smoother needs the splitting.
    pub fn from_spec(
        spec: &SmootherSpec,
        a: &SparseMatrix,
        grid: Option<&Grid>,
        split: Option<&Splitting>,
    ) -> Result<Self> {
        match spec.kind {
            SmootherKind::GsForward => Ok(Smoother::Sweep(Sweep::pointwise(a, true)?)),
            SmootherKind::GsBackward => Ok(Smoother::Sweep(Sweep::pointwise(a, false)?)),
            SmootherKind::GsSymmetric => Ok(Smoother::Symmetric(Sweep::pointwise(a, true)?)),
            SmootherKind::BlockGsRedblack => {
                let grid = grid.ok_or_else(|| Error::InvalidArgument("block smoother needs a grid".into()))?;
                let part = block_partition(grid, spec.block)?;
                Ok(Smoother::Sweep(Sweep::red_black_blocks(a, &part)?))
            }
            SmootherKind::Hb => {
                let split =
                    split.ok_or_else(|| Error::InvalidArgument("hb smoother needs a splitting".into()))?;
                Ok(Smoother::Hb(Box::new(HbSmoother::new(a, split, spec.hb_inner, spec.tau)?)))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Smoother::Sweep(s) | Smoother::Symmetric(s) => s.dim(),
            Smoother::Hb(h) => h.a.n_rows(),
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        match self {
            Smoother::Sweep(s) | Smoother::Symmetric(s) => s.matrix(),
            Smoother::Hb(h) => &h.a,
        }
    }

    pub fn apply_minv(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Smoother::Sweep(s) => s.apply_minv(r),
            Smoother::Symmetric(s) => {
                let mut x = s.apply_minv(r);
                let ax = s.matrix().spmv(&x).expect("dimensions");
                let res: Vec<f64> = r.iter().zip(&ax).map(|(a, b)| a - b).collect();
                let dx = s.apply_minv_t(&res);
                axpy_into(&mut x, 1.0, &dx);
                x
            }
            Smoother::Hb(h) if h.transposed => h.minv_t(r),
            Smoother::Hb(h) => h.minv(r),
        }
    }

    pub fn apply_minv_t(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Smoother::Sweep(s) => s.apply_minv_t(r),
            Smoother::Symmetric(_) => self.apply_minv(r),
            Smoother::Hb(h) if h.transposed => h.minv(r),
            Smoother::Hb(h) => h.minv_t(r),
        }
    }

    pub fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Smoother::Sweep(s) => s.apply_m(x),
            Smoother::Symmetric(s) => {
                let y = s.apply_mt(x);
                let y = s.apply_block_diag_inv(&y);
                s.apply_m(&y)
            }
            Smoother::Hb(h) => h.m(x, h.transposed),
        }
    }

    pub fn apply_mt(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Smoother::Sweep(s) => s.apply_mt(x),
            Smoother::Symmetric(_) => self.apply_m(x),
            Smoother::Hb(h) => h.m(x, !h.transposed),
        }
    }

    /// `M̃^{-1} r = (M^{-1} + M^{-T} - M^{-T} A M^{-1}) r`.
    pub fn apply_msymm_inv(&self, r: &[f64]) -> Vec<f64> {
        let y = self.apply_minv(r);
        let mut out = self.apply_minv_t(r);
        let ay = self.matrix().spmv(&y).expect("dimensions");
        let z = self.apply_minv_t(&ay);
        axpy_into(&mut out, 1.0, &y);
        axpy_into(&mut out, -1.0, &z);
        out
    }

    /// Smoother for `M^T`.
    pub fn transpose(&self) -> Self {
        match self {
            Smoother::Sweep(s) => Smoother::Sweep(s.reversed()),
            Smoother::Symmetric(_) => self.clone(),
            Smoother::Hb(h) => {
                let mut t = (**h).clone();
                t.transposed = !t.transposed;
                Smoother::Hb(Box::new(t))
            }
        }
    }

    /// `x <- x + M^{-1}(b - A x)`, repeated `sweeps` times.
    pub fn relax(&self, x: &mut [f64], b: &[f64], sweeps: usize) {
        let a = self.matrix();
        let mut ax = vec![0.0; x.len()];
        for _ in 0..sweeps {
            a.spmv_into(x, &mut ax);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            axpy_into(x, 1.0, &self.apply_minv(&r));
        }
    }

    /// Error propagation `(I - M^{-1} A) e`.
    pub fn error_step(&self, e: &[f64]) -> Vec<f64> {
        let ae = self.matrix().spmv(e).expect("dimensions");
        let d = self.apply_minv(&ae);
        e.iter().zip(d).map(|(a, b)| a - b).collect()
    }

    /// Dense `M`.
    pub fn m_dense(&self, mode: ExecMode) -> DMatrix<f64> {
        assemble_dense(&MOperator(self), mode)
    }

    /// The symmetrized smoother `M̃ = M (M + M^T - A)^{-1} M^T`.
    ///
    /// Errors with [`Error::SmootherNotConvergent`] when `M + M^T - A` is not
    /// positive definite.
    pub fn symmetrized(&self, mode: ExecMode) -> Result<Symmetrized> {
        if let Smoother::Sweep(s) = self {
            return Ok(Symmetrized::Sparse(s.symmetrized()?));
        }
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        let m = self.m_dense(mode);
        let a = self.matrix().to_dense();
        let middle = &m + m.transpose() - a;
        let ch = DenseCholesky::factor(&middle).map_err(|_| {
            Error::SmootherNotConvergent("M + M^T - A is not positive definite".into())
        })?;
        let w = ch.solve_matrix(&m.transpose());
        let mut s = &m * w;
        symmetrize(&mut s);
        Ok(Symmetrized::Dense(s))
    }

    /// Same kind of smoother on the submatrix `A_ss` (F-relaxation uses `s = F`).
    pub fn restricted(&self, set: &[usize]) -> Result<Self> {
        match self {
            Smoother::Sweep(s) => Ok(Smoother::Sweep(s.restricted(set)?)),
            Smoother::Symmetric(s) => Ok(Smoother::Symmetric(s.restricted(set)?)),
            Smoother::Hb(_) => Err(Error::InvalidArgument(
                "the block-factorized smoother has no restriction".into(),
            )),
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

struct MOperator<'a>(&'a Smoother);

impl LinearOperator for MOperator<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.0.apply_m(x));
    }
}

/// `M̃` in whichever storage its structure allows.
#[derive(Debug, Clone)]
pub enum Symmetrized {
    Sparse(SparseMatrix),
    Dense(DMatrix<f64>),
}

impl Symmetrized {
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Symmetrized::Sparse(s) => s.to_dense(),
            Symmetrized::Dense(d) => d.clone(),
        }
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        match self {
            Symmetrized::Sparse(s) => s.clone(),
            Symmetrized::Dense(d) => SparseMatrix::from_dense(d),
        }
    }
}

impl LinearOperator for Symmetrized {
    fn dim(&self) -> usize {
        match self {
            Symmetrized::Sparse(s) => s.n_rows(),
            Symmetrized::Dense(d) => d.nrows(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Symmetrized::Sparse(s) => s.apply(x, y),
            Symmetrized::Dense(d) => d.apply(x, y),
        }
    }

    fn factor(&self) -> Option<SpdFactor> {
        match self {
            Symmetrized::Sparse(s) => s.factor(),
            Symmetrized::Dense(d) => d.factor(),
        }
    }
}

/// Smallest `τ` (up to relative tolerance `rtol`) for which the
/// block-factorized smoother satisfies `M + M^T - A ≻ 0`, by bisection.
pub fn hb_min_tau(a: &SparseMatrix, split: &Splitting, inner: HbInner, rtol: f64) -> Result<f64> {
    let convergent = |tau: f64| -> Result<bool> {
        let s = Smoother::Hb(Box::new(HbSmoother::new(a, split, inner, Some(tau))?));
        let m = s.m_dense(ExecMode::Sequential);
        let middle = &m + m.transpose() - a.to_dense();
        Ok(DenseCholesky::factor(&middle).is_ok())
    };
    let mut hi = 2.0 * schur_complement(a, split)?.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    hi = hi.max(SINGULAR_RTOL);
    let mut tries = 0;
    while !convergent(hi)? {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::SmootherNotConvergent("no admissible tau found".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > rtol * hi {
        let mid = 0.5 * (lo + hi);
        if convergent(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
