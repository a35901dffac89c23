//! Bootstrap AMG setup with least-squares interpolation and a multilevel
//! generalized eigensolver (MGE).
//!
//! Every level keeps two sets of test vectors: relaxed vectors `V^r`
//! (smoothed solutions of `A_l v = 0`) and eigen-approximations `V^e` of the
//! pencil `(A_l, X_l)` with `X_l = P_l^T X P_l`. Interpolation on each level
//! is fitted to `V^r ∪ V^e` by weighted least squares over nearest-neighbor
//! sparsity from full coarsening. The hierarchy is refined by repeated V- or
//! W-shaped setup cycles; the solve phase is a plain V-cycle with forward
//! Gauss-Seidel before and backward Gauss-Seidel after the coarse correction.
//! `M̃` is the symmetrization of that cycle, `L^T D^{-1} L` with `L` the
//! lower triangle of `A`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{RateMethod, RateReport};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::interp::ls_interp;
use crate::linalg::solve::{dot, norm2};
use crate::linalg::{galerkin_sparse, gen_eig_dense, SparseMatrix, SpdFactor};
use crate::problems::{coarse_grid, full_coarsening, Grid, InterpPattern, Splitting};
use crate::rng::{self, streams};
use crate::smoothers::{Smoother, Sweep};

/// Rate above which a solve run is flagged as divergent.
pub const DIVERGENCE_RATIO: f64 = 1.05;

/// Number of trailing cycles averaged by [`Hierarchy::solve_rate`].
pub const RATE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetupCycle {
    V,
    W,
}

/// The matrix `X` of the pencil `(A, X)` targeted by the eigensolver and used
/// in the least-squares weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pencil {
    /// `X = I`: eigenvectors of `A`.
    Identity,
    /// `X = M̃`, the symmetrized Gauss-Seidel smoother of the solve cycle.
    Msymm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BamgConfig {
    pub cycle: SetupCycle,
    /// Number of setup cycles.
    pub m: usize,
    pub k_r: usize,
    pub k_e: usize,
    /// Forward sweeps on the test vectors (setup).
    pub nu_pre: usize,
    /// Backward sweeps on the test vectors (setup).
    pub nu_post: usize,
    pub pencil: Pencil,
    /// Coarsening stops once the grid has at most this many cells per side.
    pub coarsest_n: usize,
    pub ridge: f64,
    pub seed: u64,
    /// Forward sweeps before the coarse correction in the solve phase.
    pub solve_nu_pre: usize,
    /// Backward sweeps after the coarse correction in the solve phase.
    pub solve_nu_post: usize,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for BamgConfig {
    fn default() -> Self {
        Self {
            cycle: SetupCycle::W,
            m: 2,
            k_r: 8,
            k_e: 8,
            nu_pre: 4,
            nu_post: 4,
            pencil: Pencil::Msymm,
            coarsest_n: 7,
            ridge: 1e-12,
            seed: 0,
            solve_nu_pre: 1,
            solve_nu_post: 1,
            exec: ExecMode::auto(),
        }
    }
}

impl BamgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_r + self.k_e == 0 {
            return Err(Error::InvalidArgument("k_r + k_e must be positive".into()));
        }
        if self.k_r == 0 && self.m == 0 {
            return Err(Error::InvalidArgument("k_r = 0 needs at least one setup cycle".into()));
        }
        if self.coarsest_n < 2 {
            return Err(Error::InvalidArgument("coarsest_n must be at least 2".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `‖v‖_X / ‖v‖_A`, the least-squares weight of a test vector.
pub fn ls_weights(v: &[f64], a: &SparseMatrix, x: &SparseMatrix) -> Result<f64> {
    let va = a.bilinear(v, v);
    let vx = x.bilinear(v, v);
    if !(va > 0.0) || !(vx > 0.0) {
        return Err(Error::InvalidArgument("test vector has zero energy".into()));
    }
    Ok((vx / va).sqrt())
}

#[derive(Debug, Clone)]
pub struct Level {
    pub a: SparseMatrix,
    /// `X_l = P_l^T X P_l`.
    pub x: SparseMatrix,
    /// Geometry used for coarsening and sparsity; `None` when the operator
    /// was given without one.
    pub grid: Option<Grid>,
    pub split: Option<Splitting>,
    pub pattern: Option<InterpPattern>,
    /// Interpolation from the next coarser level.
    pub p: Option<SparseMatrix>,
    pt: Option<SparseMatrix>,
    pre: Smoother,
    post: Smoother,
    pub tv_r: Vec<Vec<f64>>,
    pub tv_e: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
}

impl Level {
    fn new(a: SparseMatrix, x: SparseMatrix, grid: Option<Grid>) -> Result<Self> {
        let pre = Smoother::Sweep(Sweep::pointwise(&a, true)?);
        let post = Smoother::Sweep(Sweep::pointwise(&a, false)?);
        Ok(Self {
            a,
            x,
            grid,
            split: None,
            pattern: None,
            p: None,
            pt: None,
            pre,
            post,
            tv_r: vec![],
            tv_e: vec![],
            lambdas: vec![],
        })
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    fn relax_homogeneous(&self, v: &mut [f64], nu_pre: usize, nu_post: usize) {
        let zero = vec![0.0; v.len()];
        self.pre.relax(v, &zero, nu_pre);
        self.post.relax(v, &zero, nu_post);
    }

    /// Relaxes `(A - λ X) v = 0`, updating `λ` to the Rayleigh quotient after
    /// every sweep. Returns the final `λ`.
    fn relax_shifted(&self, v: &mut [f64], mut lambda: f64, nu_pre: usize, nu_post: usize) -> f64 {
        let sweeps = (0..nu_pre).map(|_| &self.pre).chain((0..nu_post).map(|_| &self.post));
        for sm in sweeps {
            let av = self.a.spmv(v).expect("dimensions");
            let xv = self.x.spmv(v).expect("dimensions");
            let r: Vec<f64> = xv.iter().zip(&av).map(|(x, a)| lambda * x - a).collect();
            let d = sm.apply_minv(&r);
            for (vi, di) in v.iter_mut().zip(d) {
                *vi += di;
            }
            lambda = rayleigh(&self.a, &self.x, v);
        }
        lambda
    }

    fn residual_homogeneous(&self) -> f64 {
        let an = self.a.norm_inf();
        self.tv_r
            .iter()
            .map(|v| norm2(&self.a.spmv(v).expect("dimensions")) / (an * norm2(v)))
            .fold(0.0, f64::max)
    }

    fn residual_eigen(&self) -> f64 {
        let an = self.a.norm_inf();
        self.tv_e
            .iter()
            .zip(&self.lambdas)
            .map(|(v, l)| {
                let av = self.a.spmv(v).expect("dimensions");
                let xv = self.x.spmv(v).expect("dimensions");
                let r: Vec<f64> = av.iter().zip(&xv).map(|(a, x)| a - l * x).collect();
                norm2(&r) / (an * norm2(v))
            })
            .fold(0.0, f64::max)
    }
}

fn rayleigh(a: &SparseMatrix, x: &SparseMatrix, v: &[f64]) -> f64 {
    a.bilinear(v, v) / x.bilinear(v, v)
}

/// Rayleigh-Ritz on the span of `vs` for the pencil `(a, x)`: returns the
/// Ritz vectors (X-orthonormal, ascending) and values. Keeps a relaxed set
/// of eigen-approximations from collapsing onto the same few modes. Falls
/// back to the individual Rayleigh quotients when the span is degenerate.
fn rayleigh_ritz(a: &SparseMatrix, x: &SparseMatrix, vs: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = vs.len();
    if k == 0 {
        return (vs, vec![]);
    }
    let av: Vec<Vec<f64>> = vs.iter().map(|v| a.spmv(v).expect("dimensions")).collect();
    let xv: Vec<Vec<f64>> = vs.iter().map(|v| x.spmv(v).expect("dimensions")).collect();
    let ak = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&vs[i], &av[j]) + dot(&vs[j], &av[i])));
    let xk = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&vs[i], &xv[j]) + dot(&vs[j], &xv[i])));
    match gen_eig_dense(&ak, &xk) {
        Ok(pairs) => {
            let n = vs[0].len();
            let ritz = (0..k)
                .map(|j| {
                    let mut w = vec![0.0; n];
                    for (i, v) in vs.iter().enumerate() {
                        let c = pairs.vectors[(i, j)];
                        w.iter_mut().zip(v).for_each(|(wi, vi)| *wi += c * vi);
                    }
                    normalize(&mut w);
                    w
                })
                .collect();
            (ritz, pairs.values)
        }
        Err(_) => {
            let lambdas = vs.iter().map(|v| rayleigh(a, x, v)).collect();
            (vs, lambdas)
        }
    }
}

fn normalize(v: &mut [f64]) {
    let s = norm2(v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
    pub config: BamgConfig,
    /// One entry per step of the setup, e.g. `"relax 1"`, `"eigen 3"`, `"lift 2"`.
    pub log: Vec<String>,
    coarse_solve: Option<SpdFactor>,
}

/// Runs the bootstrap setup on `a` discretized on `grid`.
pub fn bootstrap_setup(a: &SparseMatrix, grid: &Grid, config: &BamgConfig) -> Result<Hierarchy> {
    config.validate()?;
    if a.n_rows() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix of size {} on a grid of {} cells",
            a.n_rows(),
            grid.len()
        )));
    }
    let x = match config.pencil {
        Pencil::Identity => SparseMatrix::identity(a.n_rows()),
        Pencil::Msymm => Sweep::pointwise(a, false)?.symmetrized()?,
    };
    let mut h = Hierarchy {
        levels: vec![Level::new(a.clone(), x, Some(*grid))?],
        config: config.clone(),
        log: vec![],
        coarse_solve: None,
    };
    let mut rng = rng::stream(config.seed, streams::TEST_VECTORS);
    h.levels[0].tv_r = (0..config.k_r).map(|_| rng::uniform_vec(&mut rng, a.n_rows())).collect();

    if config.m == 0 {
        // plain bootstrap: one relaxation-only descent, no eigen-approximations
        let mut l = 0;
        while !h.is_coarsest(l) {
            h.descend(l)?;
            l += 1;
        }
        h.levels.truncate(l + 1);
    }
    // the first cycle only has relaxed vectors; later cycles refine both sets
    for _ in 0..config.m {
        h.visit(0)?;
    }
    h.finalize()?;
    Ok(h)
}

impl Hierarchy {
    /// Hierarchy with prescribed interpolations (finest first) and no test
    /// vectors, for solve-phase comparisons.
    pub fn from_interpolations(a: &SparseMatrix, ps: Vec<SparseMatrix>, config: &BamgConfig) -> Result<Self> {
        let mut levels = vec![Level::new(a.clone(), SparseMatrix::identity(a.n_rows()), None)?];
        for p in ps {
            let fine = levels.last_mut().expect("nonempty");
            let ac = galerkin_sparse(&p, &fine.a)?;
            let xc = galerkin_sparse(&p, &fine.x)?;
            fine.pt = Some(p.transpose());
            fine.p = Some(p);
            levels.push(Level::new(ac, xc, None)?);
        }
        let mut h = Self {
            levels,
            config: config.clone(),
            log: vec![],
            coarse_solve: None,
        };
        h.finalize()?;
        Ok(h)
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    fn is_coarsest(&self, l: usize) -> bool {
        match self.levels[l].grid {
            Some(g) => g.n <= self.config.coarsest_n || g.n < 3,
            None => l + 1 == self.levels.len(),
        }
    }

    fn visit(&mut self, l: usize) -> Result<()> {
        if self.is_coarsest(l) {
            self.levels.truncate(l + 1);
            return self.coarse_eigensolve(l);
        }
        let gamma = match self.config.cycle {
            SetupCycle::W if l > 0 => 2,
            _ => 1,
        };
        for g in 0..gamma {
            if g > 0 {
                self.lift_eigen(l)?;
            }
            self.descend(l)?;
            self.visit(l + 1)?;
        }
        self.lift_eigen(l)?;
        self.relax_eigen(l);
        Ok(())
    }

    /// Relaxes all test vectors on level `l`, fits `P`, forms the Galerkin
    /// operators of level `l + 1` and injects the test vectors there.
    fn descend(&mut self, l: usize) -> Result<()> {
        self.log.push(format!("relax {l}"));
        let cfg = self.config.clone();
        let lvl = &self.levels[l];
        let tv_r = exec::map_slice(cfg.exec, &lvl.tv_r, |v| {
            let mut v = v.clone();
            lvl.relax_homogeneous(&mut v, cfg.nu_pre, cfg.nu_post);
            normalize(&mut v);
            v
        });
        let pairs: Vec<(&Vec<f64>, f64)> = lvl.tv_e.iter().zip(lvl.lambdas.iter().copied()).collect();
        let relaxed = exec::map_slice(cfg.exec, &pairs, |(v, lam)| {
            let mut v = (*v).clone();
            let lam = lvl.relax_shifted(&mut v, *lam, cfg.nu_pre, cfg.nu_post);
            normalize(&mut v);
            (v, lam)
        });
        let (tv_e, lambdas) = rayleigh_ritz(&lvl.a, &lvl.x, relaxed.into_iter().map(|p| p.0).collect());

        let grid = lvl.grid.ok_or_else(|| Error::InvalidArgument("level without geometry".into()))?;
        let (split, pattern) = full_coarsening(&grid)?;
        let n = lvl.n();
        let all: Vec<&Vec<f64>> = tv_r.iter().chain(tv_e.iter()).collect();
        let tvs = DMatrix::from_fn(n, all.len(), |i, k| all[k][i]);
        let weights = all
            .iter()
            .map(|v| ls_weights(v, &lvl.a, &lvl.x))
            .collect::<Result<Vec<f64>>>()?;
        let p = ls_interp(&tvs, &weights, &split, &pattern, cfg.ridge)?;
        let ac = galerkin_sparse(&p, &lvl.a)?;
        let xc = galerkin_sparse(&p, &lvl.x)?;

        let mut coarse = Level::new(ac, xc, Some(coarse_grid(&grid)))?;
        coarse.tv_r = tv_r.iter().map(|v| split.gather_coarse(v)).collect();
        coarse.tv_e = tv_e.iter().map(|v| split.gather_coarse(v)).collect();
        coarse.lambdas = lambdas.clone();

        let lvl = &mut self.levels[l];
        lvl.tv_r = tv_r;
        lvl.tv_e = tv_e;
        lvl.lambdas = lambdas;
        lvl.pt = Some(p.transpose());
        lvl.p = Some(p);
        lvl.split = Some(split);
        lvl.pattern = Some(pattern);
        if self.levels.len() > l + 1 {
            self.levels[l + 1] = coarse;
        } else {
            self.levels.push(coarse);
        }
        Ok(())
    }

    /// Dense solve of the coarsest pencil for the `k_e` smallest pairs.
    fn coarse_eigensolve(&mut self, l: usize) -> Result<()> {
        self.log.push(format!("eigen {l}"));
        let k = self.config.k_e.min(self.levels[l].n());
        if k == 0 {
            return Ok(());
        }
        let lvl = &mut self.levels[l];
        let pairs = gen_eig_dense(&lvl.a.to_dense(), &lvl.x.to_dense())?;
        lvl.tv_e = (0..k).map(|j| pairs.vectors.column(j).iter().copied().collect()).collect();
        lvl.lambdas = pairs.values[..k].to_vec();
        Ok(())
    }

    /// Replaces `V^e` on level `l` by the interpolated vectors of level `l + 1`.
    fn lift_eigen(&mut self, l: usize) -> Result<()> {
        if l + 1 >= self.levels.len() {
            return Ok(());
        }
        self.log.push(format!("lift {l}"));
        let p = self.levels[l].p.as_ref().expect("interpolation built");
        let tv_e = self.levels[l + 1].tv_e.iter().map(|v| p.spmv(v)).collect::<Result<Vec<_>>>()?;
        let lambdas = self.levels[l + 1].lambdas.clone();
        self.levels[l].tv_e = tv_e;
        self.levels[l].lambdas = lambdas;
        Ok(())
    }

    fn relax_eigen(&mut self, l: usize) {
        let cfg = &self.config;
        let lvl = &self.levels[l];
        let pairs: Vec<(&Vec<f64>, f64)> = lvl.tv_e.iter().zip(lvl.lambdas.iter().copied()).collect();
        let relaxed = exec::map_slice(cfg.exec, &pairs, |(v, lam)| {
            let mut v = (*v).clone();
            let lam = lvl.relax_shifted(&mut v, *lam, cfg.nu_pre, cfg.nu_post);
            normalize(&mut v);
            (v, lam)
        });
        let (tv_e, lambdas) = rayleigh_ritz(&lvl.a, &lvl.x, relaxed.into_iter().map(|p| p.0).collect());
        let lvl = &mut self.levels[l];
        lvl.tv_e = tv_e;
        lvl.lambdas = lambdas;
    }

    /// One MGE pass over the fixed hierarchy: exact coarsest pairs, then
    /// interpolation and shifted relaxation level by level up to the finest.
    pub fn mge_sweep(&mut self) -> Result<()> {
        let last = self.levels.len() - 1;
        self.coarse_eigensolve(last)?;
        for l in (0..last).rev() {
            self.lift_eigen(l)?;
            self.relax_eigen(l);
        }
        Ok(())
    }

    /// Shifted relaxation of a single pair on level `l`; returns the new `λ`.
    pub fn relax_eigenpair(&self, l: usize, v: &mut [f64], lambda: f64) -> f64 {
        self.levels[l].relax_shifted(v, lambda, self.config.nu_pre, self.config.nu_post)
    }

    /// Composite interpolation `P_l x` from level `l` to the finest level.
    pub fn to_finest(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for k in (0..l).rev() {
            v = self.levels[k].p.as_ref().expect("interpolation built").spmv(&v).expect("dimensions");
        }
        v
    }

    fn finalize(&mut self) -> Result<()> {
        let last = self.levels.last_mut().expect("nonempty");
        last.p = None;
        last.pt = None;
        self.coarse_solve = Some(SpdFactor::sparse(&last.a)?);
        Ok(())
    }

    fn vcycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let lvl = &self.levels[l];
        let (Some(p), Some(pt)) = (&lvl.p, &lvl.pt) else {
            let sol = self.coarse_solve.as_ref().expect("finalized").solve(b);
            x.copy_from_slice(&sol);
            return;
        };
        lvl.pre.relax(x, b, self.config.solve_nu_pre);
        let ax = lvl.a.spmv(x).expect("dimensions");
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rc = pt.spmv(&r).expect("dimensions");
        let mut ec = vec![0.0; rc.len()];
        self.vcycle(l + 1, &rc, &mut ec);
        let e = p.spmv(&ec).expect("dimensions");
        for (xi, ei) in x.iter_mut().zip(e) {
            *xi += ei;
        }
        lvl.post.relax(x, b, self.config.solve_nu_post);
    }

    /// Applies one solve-phase V-cycle to `x` for right-hand side `b`.
    pub fn cycle(&self, b: &[f64], x: &mut [f64]) {
        self.vcycle(0, b, x);
    }

    /// Runs `n_cycles` V-cycles on `A u = 0` from a random start and reports
    /// the geometric mean of the last [`RATE_WINDOW`] per-cycle A-norm
    /// reductions. `converged` is false when that mean exceeds
    /// [`DIVERGENCE_RATIO`].
    pub fn solve_rate(&self, n_cycles: usize, seed: u64) -> RateReport {
        let a = &self.levels[0].a;
        let n = a.n_rows();
        let mut rng = rng::stream(seed, streams::SOLVE_START);
        let mut u = rng::uniform_vec(&mut rng, n);
        let zero = vec![0.0; n];
        let mut norm = a.bilinear(&u, &u).sqrt();
        let mut history = Vec::with_capacity(n_cycles);
        for _ in 0..n_cycles {
            u.iter_mut().for_each(|x| *x /= norm);
            self.cycle(&zero, &mut u);
            norm = a.bilinear(&u, &u).sqrt();
            history.push(norm);
            if !(norm > 0.0) || !norm.is_finite() {
                break;
            }
        }
        let tail = &history[history.len().saturating_sub(RATE_WINDOW)..];
        let estimate = if tail.iter().any(|h| !(*h > 0.0)) {
            0.0
        } else {
            (tail.iter().map(|h| h.ln()).sum::<f64>() / tail.len().max(1) as f64).exp()
        };
        RateReport {
            estimate,
            method: RateMethod::IterationHistory,
            iterations: history.len(),
            history,
            converged: estimate <= DIVERGENCE_RATIO,
        }
    }

    pub fn summary(&self) -> Vec<LevelSummary> {
        self.levels
            .iter()
            .enumerate()
            .map(|(l, lvl)| LevelSummary {
                level: l,
                n: lvl.n(),
                nnz_a: lvl.a.nnz(),
                nnz_p: lvl.p.as_ref().map_or(0, |p| p.nnz()),
                k_r: lvl.tv_r.len(),
                k_e: lvl.tv_e.len(),
                residual_r: lvl.residual_homogeneous(),
                residual_e: lvl.residual_eigen(),
                lambda_min: lvl.lambdas.iter().copied().fold(f64::NAN, f64::min),
            })
            .collect()
    }

    /// Writes [`Hierarchy::summary`] as CSV with a header row.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in self.summary() {
            wr.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n: usize,
    pub nnz_a: usize,
    pub nnz_p: usize,
    pub k_r: usize,
    pub k_e: usize,
    /// Largest `‖A v‖ / (‖A‖ ‖v‖)` over the relaxed vectors.
    pub residual_r: f64,
    /// Largest `‖A v - λ X v‖ / (‖A‖ ‖v‖)` over the eigen-approximations.
    pub residual_e: f64,
    pub lambda_min: f64,
}

/// `⟨A x, x⟩` on level `l` against `⟨A P_l x, P_l x⟩` on the finest level.
pub fn galerkin_defect(h: &Hierarchy, l: usize, x: &[f64]) -> f64 {
    let coarse = h.levels[l].a.bilinear(x, x);
    let px = h.to_finest(l, x);
    let fine = h.levels[0].a.bilinear(&px, &px);
    (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE)
}
