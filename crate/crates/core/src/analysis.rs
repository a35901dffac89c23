//! Two-grid error operators and convergence measures.
//!
//! The two-grid error propagator is
//! `E = (I - N^{-1} A)^{ν_post} (I - Π_A(P)) (I - M^{-1} A)^{ν_pre}`,
//! applied matrix-free with an exact coarse solve. With `M = N^T` the
//! operator is self-adjoint in the `A`-inner product and its spectral radius
//! is `‖(I - N^{-1} A)(I - Π_A(P))‖_A^2`.
//!
//! The symmetric cycle of a smoother `M` post-smooths with `M` and
//! pre-smooths with `M^T`, which pairs it with `M̃ = M (M + M^T - A)^{-1} M^T`:
//! its rate with optimal interpolation is `1 - λ_{nc+1}(A, M̃)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::linalg::eig::{assemble_dense, gen_eig_dense, gen_eig_sym, EigMode, EigOptions, LinearOperator};
use crate::linalg::solve::{condition_number, dot, pcg_jacobi};
use crate::linalg::{galerkin_dense, galerkin_sparse, SparseMatrix, SpdFactor};
use crate::problems::Splitting;
use crate::rng;
use crate::smoothers::Smoother;

/// Interpolation in dense or sparse storage.
#[derive(Debug, Clone)]
pub enum Prolongation {
    Dense(DMatrix<f64>),
    Sparse(SparseMatrix),
}

impl Prolongation {
    pub fn n(&self) -> usize {
        match self {
            Prolongation::Dense(p) => p.nrows(),
            Prolongation::Sparse(p) => p.n_rows(),
        }
    }

    pub fn nc(&self) -> usize {
        match self {
            Prolongation::Dense(p) => p.ncols(),
            Prolongation::Sparse(p) => p.n_cols(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Prolongation::Dense(p) => {
                let mut y = vec![0.0; p.nrows()];
                for (j, xj) in x.iter().enumerate() {
                    if *xj != 0.0 {
                        for (yi, pij) in y.iter_mut().zip(p.column(j).iter()) {
                            *yi += pij * xj;
                        }
                    }
                }
                y
            }
            Prolongation::Sparse(p) => p.spmv(x).expect("dimensions"),
        }
    }

    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Prolongation::Dense(p) => p.column_iter().map(|c| dot(c.as_slice(), x)).collect(),
            Prolongation::Sparse(p) => {
                let mut y = vec![0.0; p.n_cols()];
                for i in 0..p.n_rows() {
                    let (cols, vals) = p.row(i);
                    for (c, v) in cols.iter().zip(vals) {
                        y[*c] += v * x[i];
                    }
                }
                y
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Prolongation::Dense(p) => p.clone(),
            Prolongation::Sparse(p) => p.to_dense(),
        }
    }
}

/// `E = post ∘ (I - Π_A(P)) ∘ pre`, applied matrix-free.
#[derive(Debug, Clone)]
pub struct TwoGridOperator {
    a: SparseMatrix,
    p: Prolongation,
    coarse: SpdFactor,
    pre: Option<(Smoother, usize)>,
    post: Option<(Smoother, usize)>,
}

impl TwoGridOperator {
    pub fn new(
        a: &SparseMatrix,
        p: Prolongation,
        pre: Option<(Smoother, usize)>,
        post: Option<(Smoother, usize)>,
    ) -> Result<Self> {
        if p.n() != a.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "P has {} rows, A has {}",
                p.n(),
                a.n_rows()
            )));
        }
        for s in pre.iter().chain(post.iter()) {
            if s.0.dim() != a.n_rows() {
                return Err(Error::DimensionMismatch("smoother dimension".into()));
            }
        }
        let coarse = match &p {
            Prolongation::Dense(pd) => SpdFactor::dense(&galerkin_dense(pd, a, ExecMode::Sequential)?)?,
            Prolongation::Sparse(ps) => SpdFactor::sparse(&galerkin_sparse(ps, a)?)?,
        };
        Ok(Self {
            a: a.clone(),
            p,
            coarse,
            pre,
            post,
        })
    }

    /// The symmetric cycle: `ν` sweeps of the transpose of `smoother` before,
    /// `ν` sweeps of `smoother` after the coarse correction.
    pub fn symmetric(a: &SparseMatrix, p: Prolongation, smoother: &Smoother, nu: usize) -> Result<Self> {
        Self::new(a, p, Some((smoother.transpose(), nu)), Some((smoother.clone(), nu)))
    }

    /// The `A`-adjoint operator.
    pub fn adjoint(&self) -> Self {
        let flip = |s: &Option<(Smoother, usize)>| s.as_ref().map(|(m, nu)| (m.transpose(), *nu));
        Self {
            a: self.a.clone(),
            p: self.p.clone(),
            coarse: self.coarse.clone(),
            pre: flip(&self.post),
            post: flip(&self.pre),
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.n_rows()
    }

    /// `(I - Π_A(P)) v`.
    pub fn coarse_correction(&self, v: &[f64]) -> Vec<f64> {
        let av = self.a.spmv(v).expect("dimensions");
        let rc = self.p.apply_t(&av);
        let xc = self.coarse.solve(&rc);
        let corr = self.p.apply(&xc);
        v.iter().zip(corr).map(|(a, b)| a - b).collect()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut e = v.to_vec();
        if let Some((s, nu)) = &self.pre {
            for _ in 0..*nu {
                e = s.error_step(&e);
            }
        }
        e = self.coarse_correction(&e);
        if let Some((s, nu)) = &self.post {
            for _ in 0..*nu {
                e = s.error_step(&e);
            }
        }
        e
    }

    /// Dense `E` by probing unit vectors.
    pub fn to_dense(&self, mode: ExecMode) -> DMatrix<f64> {
        assemble_dense(self, mode)
    }
}

impl LinearOperator for TwoGridOperator {
    fn dim(&self) -> usize {
        self.a.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&TwoGridOperator::apply(self, x));
    }
}

/// `v ↦ E_2 E_1 v`; with `E_2 = E^*` this is the operator behind `‖E‖_A`.
struct Composed<'a>(&'a TwoGridOperator, &'a TwoGridOperator);

impl Composed<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.1.apply(&self.0.apply(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    Dense,
    PowerAnorm,
    IterationHistory,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub estimate: f64,
    pub method: RateMethod,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub converged: bool,
}

impl RateReport {
    fn closed_form(estimate: f64) -> Self {
        Self {
            estimate,
            method: RateMethod::ClosedForm,
            iterations: 0,
            history: vec![],
            converged: true,
        }
    }

    /// Geometric mean of the per-step reductions in the history.
    pub fn geometric_mean(&self) -> f64 {
        if self.history.is_empty() {
            return self.estimate;
        }
        if self.history.iter().any(|h| *h == 0.0) {
            return 0.0;
        }
        (self.history.iter().map(|h| h.ln()).sum::<f64>() / self.history.len() as f64).exp()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 2000,
            seed: 0,
        }
    }
}

fn a_norm(a: &SparseMatrix, v: &[f64]) -> f64 {
    a.bilinear(v, v).max(0.0).sqrt()
}

/// Largest eigenvalue of an `A`-self-adjoint positive semidefinite map by
/// power iteration with `A`-inner-product Rayleigh quotients.
pub fn power_a_selfadjoint(a: &SparseMatrix, apply: impl Fn(&[f64]) -> Vec<f64>, opts: &PowerOptions) -> RateReport {
    let n = a.n_rows();
    let mut r = rng::stream(opts.seed, rng::streams::POWER_ITERATION);
    let mut v = rng::uniform_vec(&mut r, n);
    let nv = a_norm(a, &v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut history = Vec::new();
    let mut prev = f64::NAN;
    for it in 1..=opts.max_iter {
        let w = apply(&v);
        let est = a.bilinear(&w, &v);
        history.push(est);
        let nw = a_norm(a, &w);
        if nw == 0.0 || est <= 0.0 && nw <= f64::MIN_POSITIVE {
            return RateReport {
                estimate: 0.0,
                method: RateMethod::PowerAnorm,
                iterations: it,
                history,
                converged: true,
            };
        }
        if (est - prev).abs() < opts.tol * est.abs() {
            return RateReport {
                estimate: est,
                method: RateMethod::PowerAnorm,
                iterations: it,
                history,
                converged: true,
            };
        }
        prev = est;
        v = w.into_iter().map(|x| x / nw).collect();
    }
    RateReport {
        estimate: prev,
        method: RateMethod::PowerAnorm,
        iterations: opts.max_iter,
        history,
        converged: false,
    }
}

/// `ρ(E)` for an `A`-self-adjoint two-grid operator (the symmetric cycle).
pub fn rate_a_norm(op: &TwoGridOperator, opts: &PowerOptions) -> RateReport {
    power_a_selfadjoint(op.matrix(), |v| op.apply(v), opts)
}

/// `‖E‖_A` for a general two-grid operator, from `ρ(E^* E)`.
pub fn norm_a(op: &TwoGridOperator, opts: &PowerOptions) -> RateReport {
    let adj = op.adjoint();
    let c = Composed(op, &adj);
    let mut rep = power_a_selfadjoint(op.matrix(), |v| c.apply(v), opts);
    rep.estimate = rep.estimate.max(0.0).sqrt();
    rep
}

/// Dense reference for `ρ(E)` of an `A`-self-adjoint operator: largest
/// eigenvalue of the pencil `(A E, A)`.
pub fn rate_dense_selfadjoint(op: &TwoGridOperator, mode: ExecMode) -> Result<f64> {
    let e = op.to_dense(mode);
    let a = op.matrix().to_dense();
    let mut ae = &a * e;
    let n = ae.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (ae[(i, j)] + ae[(j, i)]);
            ae[(i, j)] = v;
            ae[(j, i)] = v;
        }
    }
    let pairs = gen_eig_dense(&ae, &a)?;
    Ok(pairs.values.last().copied().unwrap_or(0.0))
}

/// Spectral radius of a general dense matrix.
pub fn spectral_radius_dense(e: &DMatrix<f64>) -> f64 {
    e.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `λ_{nc+1}` of the pencil `(A, M̃)` and the rate `1 - λ_{nc+1}` of the
/// two-grid method with optimal interpolation (clamped to `[0, 1]`).
pub fn kappa_sharp(
    a: &dyn LinearOperator,
    msymm: &dyn LinearOperator,
    nc: usize,
    opts: &EigOptions,
) -> Result<(f64, f64)> {
    let n = a.dim();
    if nc >= n {
        return Err(Error::InvalidArgument(format!("nc = {nc} must be below n = {n}")));
    }
    let pairs = gen_eig_sym(a, msymm, nc + 1, EigMode::Smallest, opts)?;
    let lam = pairs.values[nc];
    Ok((lam, (1.0 - lam).clamp(0.0, 1.0)))
}

/// Rate report wrapper for [`kappa_sharp`].
pub fn optimal_rate(a: &dyn LinearOperator, msymm: &dyn LinearOperator, nc: usize, opts: &EigOptions) -> Result<RateReport> {
    kappa_sharp(a, msymm, nc, opts).map(|(_, r)| RateReport::closed_form(r))
}

/// `μ_X = 1 / λ_min((S^T X S)^{-1} S^T A S)`.
pub fn mu_closed_form(a: &SparseMatrix, x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let sas = galerkin_dense(s, a, ExecMode::Sequential)?;
    let mut sxs = s.transpose() * x * s;
    let m = sxs.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (sxs[(i, j)] + sxs[(j, i)]);
            sxs[(i, j)] = v;
            sxs[(j, i)] = v;
        }
    }
    let pairs = gen_eig_dense(&sas, &sxs).map_err(|_| Error::RankDeficient("S^T X S is not SPD".into()))?;
    Ok(1.0 / pairs.values[0])
}

/// Per-step reductions of an iteration; the estimate is the last one.
fn iterate_history(
    n_iters: usize,
    mut v: Vec<f64>,
    norm: impl Fn(&[f64]) -> f64,
    step: impl Fn(&[f64]) -> Vec<f64>,
) -> RateReport {
    let mut history = Vec::with_capacity(n_iters);
    let mut prev = norm(&v);
    for _ in 0..n_iters {
        if prev == 0.0 {
            break;
        }
        v = step(&v);
        let cur = norm(&v);
        history.push(cur / prev);
        prev = cur;
    }
    RateReport {
        estimate: history.last().copied().unwrap_or(0.0),
        method: RateMethod::IterationHistory,
        iterations: history.len(),
        history,
        converged: true,
    }
}

/// Compatible relaxation `v_f <- (I - M_ff^{-1} A_ff) v_f` from a random
/// F-vector, where `M_ff` is `smoother` rebuilt on `A_ff`. Reports the
/// `A_ff`-norm reduction of the last step.
pub fn cr_frelax_rate(
    a: &SparseMatrix,
    split: &Splitting,
    smoother: &Smoother,
    n_iters: usize,
    seed: u64,
) -> Result<RateReport> {
    let sf = smoother.restricted(split.fine())?;
    let aff = sf.matrix().clone();
    let mut r = rng::stream(seed, rng::streams::CR_START);
    let v0 = rng::uniform_vec(&mut r, split.nf());
    if v0.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidArgument("zero initial vector".into()));
    }
    let _ = a;
    Ok(iterate_history(n_iters, v0, |v| a_norm(&aff, v), |v| sf.error_step(v)))
}

/// Matrix-free estimate of the ideal two-grid rate: pre-smoothing with the
/// transposed smoother, the correction `v_f + A_ff^{-1} A_fc v_c`, `v_c = 0`
/// with `A_ff^{-1}` replaced by `l_inner` Jacobi-preconditioned CG steps, then
/// post-smoothing with `smoother`. Reports the `A`-norm reduction of the last step.
pub fn cr_sharp_estimate(
    a: &SparseMatrix,
    split: &Splitting,
    smoother: &Smoother,
    l_inner: usize,
    n_iters: usize,
    seed: u64,
) -> Result<RateReport> {
    let a_ff = a.extract_submatrix(split.fine(), split.fine())?;
    let a_fc = a.extract_submatrix(split.fine(), split.coarse())?;
    let pre = smoother.transpose();
    let n = a.n_rows();
    let mut r = rng::stream(seed, rng::streams::CR_START);
    let v0 = rng::uniform_vec(&mut r, n);
    let step = |v: &[f64]| -> Vec<f64> {
        let e = pre.error_step(v);
        let ec = split.gather_coarse(&e);
        let rhs = a_fc.spmv(&ec).expect("dimensions");
        let z = pcg_jacobi(&a_ff, &rhs, l_inner).unwrap_or_else(|_| vec![0.0; rhs.len()]);
        let mut out = vec![0.0; n];
        for (k, &f) in split.fine().iter().enumerate() {
            out[f] = e[f] + z[k];
        }
        smoother.error_step(&out)
    };
    let _ = pcg_jacobi(&a_ff, &vec![1.0; split.nf()], l_inner.min(1))?;
    Ok(iterate_history(n_iters, v0, |v| a_norm(a, v), step))
}

/// Upper bound `κ(M_ff) (1 + δ) / (1 - δ)` on `κ(A_ff)`, where `δ` is the
/// F-relaxation rate in the `A_ff`-norm.
pub fn condition_bound(split: &Splitting, smoother: &Smoother, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta = {delta} not in [0, 1)")));
    }
    let sf = smoother.restricted(split.fine())?;
    let mff = sf.m_dense(ExecMode::Sequential);
    Ok(condition_number(&mff) * (1.0 + delta) / (1.0 - delta))
}

/// `β = λ_max((P R)^T A (P R), A)`; requires `R P = I`.
pub fn stability_beta(a: &SparseMatrix, p: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let nc = p.ncols();
    let rp = r * p;
    let dev = (rp - DMatrix::identity(nc, nc)).amax();
    if dev > 1e-10 {
        return Err(Error::InvalidArgument(format!("R P deviates from I by {dev:e}")));
    }
    let q = p * r;
    let mut b = galerkin_dense(&q, a, ExecMode::Sequential)?;
    let n = b.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    let pairs = gen_eig_dense(&b, &a.to_dense())?;
    Ok(pairs.values.last().copied().unwrap_or(0.0))
}

/// Eigenvalues of `A` (scaled by `λ_max(A)`) and of the pencil `(A, M̃)`, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectra {
    pub a_scaled: Vec<f64>,
    pub pencil: Vec<f64>,
}

impl Spectra {
    /// The lowest `fraction` of each spectrum.
    pub fn lower(&self, fraction: f64) -> Spectra {
        let take = |v: &Vec<f64>| {
            let m = ((v.len() as f64) * fraction).round() as usize;
            v[..m.min(v.len())].to_vec()
        };
        Spectra {
            a_scaled: take(&self.a_scaled),
            pencil: take(&self.pencil),
        }
    }

    /// Number of pencil eigenvalues with `|λ - 1| > tol`.
    pub fn count_nonunit(&self, tol: f64) -> usize {
        self.pencil.iter().filter(|l| (*l - 1.0).abs() > tol).count()
    }
}

pub fn spectra_report(a: &SparseMatrix, msymm: &dyn LinearOperator, opts: &EigOptions) -> Result<Spectra> {
    let n = a.n_rows();
    if n > opts.dense_threshold {
        return Err(Error::TooLarge {
            size: n,
            limit: opts.dense_threshold,
        });
    }
    let ad = a.to_dense();
    let eig_a = gen_eig_dense(&ad, &DMatrix::identity(n, n))?;
    let lmax = eig_a.values.last().copied().unwrap_or(1.0);
    let pencil = gen_eig_sym(a, msymm, n, EigMode::Full, opts)?;
    Ok(Spectra {
        a_scaled: eig_a.values.iter().map(|v| v / lmax).collect(),
        pencil: pencil.values,
    })
}
