//! Desk-scale acceptance checks.
//!
//! Each test covers one criterion and writes a single `criterion N ...:
//! PASS|FAIL` line straight to stdout, so the verdicts show up even with
//! captured output; the individual checks are printed through the captured
//! channel (`--nocapture` shows them). Criteria 5 and 8 are identities and
//! dense oracles and fail the test when violated. The others compare with
//! published rates and only report, unless `AMGLAB_STRICT_ACCEPTANCE` is set.

use std::io::Write;
use std::time::Instant;

use amglab::analysis::{
    cr_frelax_rate, cr_sharp_estimate, condition_bound, kappa_sharp, mu_closed_form, optimal_rate, rate_a_norm,
    rate_dense_selfadjoint, spectra_report, stability_beta, PowerOptions, Prolongation, TwoGridOperator,
};
use amglab::bamg::{bootstrap_setup, ls_weights, BamgConfig, Hierarchy, Pencil};
use amglab::exec::{self, ExecMode};
use amglab::interp::{
    canonical_injections, classical_scale, generalized_ideal, ideal_interp, ideal_weights, ls_interp,
    optimal_interp, optimal_restriction, x_projection,
};
use amglab::linalg::eig::{EigMode, EigOptions};
use amglab::linalg::solve::condition_number;
use amglab::linalg::{galerkin_dense, galerkin_sparse, gen_eig_sym, solve_spd_dense, SparseMatrix, SpdFactor};
use amglab::maxvol::{maxvol_select, orthonormal_basis, MaxvolOptions, MaxvolState, PIVOT_THRESHOLD};
use amglab::problems::{
    assemble_fv, block_partition, build_coefficient, full_coarsening, red_black_coarsening, Color, Geometry, Grid,
    Pattern, Splitting,
};
use amglab::reference::{self, TwoGridBlock, KS};
use amglab::rng::{self, streams};
use amglab::smoothers::{HbInner, Smoother, SmootherKind, SmootherSpec, Sweep};
use nalgebra::{DMatrix, DVector};

struct Check {
    name: String,
    value: f64,
    target: String,
    ok: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, target: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value,
            target: target.into(),
            ok,
        }
    }

    fn within(name: impl Into<String>, value: f64, published: f64, tol: f64) -> Self {
        let ok = (value - published).abs() <= tol;
        Self::new(name, value, format!("{published} ± {tol}"), ok)
    }

    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("<= {bound:e}"), value <= bound)
    }

    fn range(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, value, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&value))
    }
}

fn finish(criterion: u32, title: &str, checks: &[Check], start: Instant, enforce: bool) {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.ok).collect();
    for c in checks {
        println!(
            "  {} {:<48} {:>12.6e}  {}",
            if c.ok { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.target
        );
    }
    let verdict = if failed.is_empty() && !checks.is_empty() { "PASS" } else { "FAIL" };
    let line = format!(
        "criterion {criterion} {title}: {verdict} ({} of {} checks, {:.1} s)\n",
        checks.len() - failed.len(),
        checks.len(),
        start.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    let strict = std::env::var_os("AMGLAB_STRICT_ACCEPTANCE").is_some();
    if enforce || strict {
        assert!(
            failed.is_empty(),
            "criterion {criterion}: {}",
            failed.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
}

struct Setup {
    a: SparseMatrix,
    split: Splitting,
    smoother: Smoother,
}

fn setup(pattern: Pattern, n: usize, k: u32, seed: u64, kind: SmootherKind, red_black: bool) -> Setup {
    let field = build_coefficient(pattern, n, k, seed, &Geometry::default()).unwrap();
    let a = assemble_fv(&field).unwrap();
    let grid = field.grid;
    let split = if red_black {
        red_black_coarsening(&grid).unwrap()
    } else {
        full_coarsening(&grid).unwrap().0
    };
    // `kind` names the pre-smoother, so the cycle's `M` is its transpose
    let smoother = Smoother::from_spec(&SmootherSpec::of(kind), &a, Some(&grid), Some(&split))
        .unwrap()
        .transpose();
    Setup { a, split, smoother }
}

/// Replicate seeds: random patterns are averaged over three draws.
fn seeds(p: Pattern) -> Vec<u64> {
    if p.is_random() {
        vec![0, 1, 2]
    } else {
        vec![0]
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ideal_rate(st: &Setup, seed: u64) -> f64 {
    let p = ideal_interp(&st.a, &st.split, ExecMode::auto()).unwrap().p;
    let op = TwoGridOperator::symmetric(&st.a, Prolongation::Dense(p), &st.smoother, 1).unwrap();
    rate_a_norm(&op, &PowerOptions { seed, ..PowerOptions::default() }).estimate
}

fn optimal(st: &Setup, seed: u64) -> f64 {
    let ms = st.smoother.symmetrized(ExecMode::auto()).unwrap();
    let eig = EigOptions { seed, ..EigOptions::default() };
    optimal_rate(&st.a, &ms, st.split.nc(), &eig).unwrap().estimate
}

/// Seed-averaged value of `f` for every `(N, pattern, k)` cell, computed in parallel.
fn table_cells(
    sizes: &[usize],
    patterns: &[Pattern],
    kind: SmootherKind,
    f: impl Fn(&Setup, u64) -> f64 + Sync,
) -> Vec<(usize, Pattern, u32, f64)> {
    let mut cells = vec![];
    for &n in sizes {
        for &p in patterns {
            for k in KS {
                cells.push((n, p, k));
            }
        }
    }
    exec::map_slice(ExecMode::auto(), &cells, |&(n, p, k)| {
        let vals: Vec<f64> = seeds(p)
            .into_iter()
            .map(|s| f(&setup(p, n, k, s, kind, false), s))
            .collect();
        (n, p, k, mean(&vals))
    })
}

#[test]
fn criterion_1_ideal_two_grid_rates() {
    let start = Instant::now();
    let cells = table_cells(&[16, 32], &Pattern::ALL_JUMP, SmootherKind::GsForward, ideal_rate);
    let checks: Vec<Check> = cells
        .into_iter()
        .map(|(n, p, k, v)| {
            let published = reference::two_grid(TwoGridBlock::Ideal, n, p, k).unwrap();
            let tol = if p == Pattern::P4 { 0.05 } else { 0.015 };
            Check::within(format!("ideal {p} N={n} k={k}"), v, published, tol)
        })
        .collect();
    finish(1, "ideal two-grid rates", &checks, start, false);
}

#[test]
fn criterion_2_optimal_two_grid_rates() {
    let start = Instant::now();
    let cells = table_cells(&[16, 32], &Pattern::ALL_JUMP, SmootherKind::GsForward, optimal);
    let checks: Vec<Check> = cells
        .into_iter()
        .map(|(n, p, k, v)| {
            let published = reference::two_grid(TwoGridBlock::Optimal, n, p, k).unwrap();
            let name = format!("optimal {p} N={n} k={k}");
            match p {
                Pattern::P1 | Pattern::P2 if published < 1e-3 => Check::at_most(name, v, 1e-3),
                Pattern::P1 | Pattern::P2 => Check::within(name, v, published, 0.01),
                _ => Check::within(name, v, published, 0.05),
            }
        })
        .collect();
    finish(2, "optimal two-grid rates", &checks, start, false);
}

#[test]
fn criterion_3_f_relaxation() {
    let start = Instant::now();
    let mut checks = vec![];
    for n in [16, 32] {
        for (p, k, tol) in [(Pattern::P1, 2, 0.01), (Pattern::P2, 4, 0.002)] {
            let st = setup(p, n, k, 0, SmootherKind::GsSymmetric, false);
            let v = cr_frelax_rate(&st.a, &st.split, &st.smoother, 5, 0).unwrap().estimate;
            let published = reference::two_grid(TwoGridBlock::FRelax, n, p, k).unwrap();
            checks.push(Check::within(format!("frelax {p} N={n} k={k}"), v, published, tol));
        }
    }
    let rates: Vec<f64> = seeds(Pattern::P4)
        .into_iter()
        .map(|s| {
            let st = setup(Pattern::P4, 32, 8, s, SmootherKind::GsForward, true);
            cr_frelax_rate(&st.a, &st.split, &st.smoother, 5, s).unwrap().estimate
        })
        .collect();
    checks.push(Check::at_most("frelax P4 red-black N=32 k=8", mean(&rates), 1e-12));
    finish(3, "F-relaxation compatible relaxation", &checks, start, false);
}

#[test]
fn criterion_4_sharp_estimate() {
    let start = Instant::now();
    let st = setup(Pattern::P1, 16, 1, 0, SmootherKind::GsForward, false);
    let p1 = cr_sharp_estimate(&st.a, &st.split, &st.smoother, 2, 5, 0).unwrap().estimate;
    let mut checks = vec![Check::range("sharp P1 N=16 k=1 L=2", p1, 0.22, 0.27)];
    let (mut sharp, mut truth) = (vec![], vec![]);
    for s in seeds(Pattern::P4) {
        let st = setup(Pattern::P4, 32, 8, s, SmootherKind::GsForward, true);
        sharp.push(cr_sharp_estimate(&st.a, &st.split, &st.smoother, 2, 5, s).unwrap().estimate);
        truth.push(ideal_rate(&st, s));
    }
    checks.push(Check::range("sharp P4 red-black N=32 k=8", mean(&sharp), 0.23, 0.27));
    checks.push(Check::within(
        "ideal P4 red-black N=32 k=8",
        mean(&truth),
        reference::TRUE_P4_REDBLACK,
        0.005,
    ));
    finish(4, "sharp compatible relaxation estimate", &checks, start, false);
}

/// `‖E‖_A` of a dense error propagator, as `‖L^T E L^{-T}‖_2` with `A = L L^T`.
fn a_norm_dense(a: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    let lt = a.clone().cholesky().unwrap().l().transpose();
    let lt_inv = lt.clone().try_inverse().unwrap();
    (lt * e * lt_inv).singular_values().max()
}

#[test]
fn criterion_5_identities() {
    let start = Instant::now();
    let mut checks = vec![];
    let eig = EigOptions::default();

    for p in Pattern::ALL_JUMP {
        let st = setup(p, 16, 2, 0, SmootherKind::GsForward, false);
        let ms = st.smoother.symmetrized(ExecMode::auto()).unwrap();
        let nc = st.split.nc();
        let (interp, pairs) = optimal_interp(&st.a, &ms, nc, &eig).unwrap();
        let op = TwoGridOperator::symmetric(&st.a, Prolongation::Dense(interp.p), &st.smoother, 1).unwrap();
        let rho = rate_a_norm(&op, &PowerOptions::default()).estimate;
        let err = (rho - (1.0 - pairs.values[nc])).abs();
        checks.push(Check::at_most(format!("rho(E_sym(P_opt)) vs 1-lambda {p} N=16"), err, 5e-3));
    }

    for p in Pattern::ALL_JUMP {
        let st = setup(p, 16, 4, 1, SmootherKind::GsForward, false);
        let pid = ideal_interp(&st.a, &st.split, ExecMode::auto()).unwrap().p;
        let pi = x_projection(&pid, &st.a.to_dense()).unwrap();
        let w = ideal_weights(&st.a, &st.split, ExecMode::auto()).unwrap();
        let n = st.a.n_rows();
        let ipi = DMatrix::<f64>::identity(n, n) - pi;
        let perm = st.split.permutation();
        let nf = st.split.nf();
        let mut err: f64 = 0.0;
        for (ri, &i) in perm.iter().enumerate() {
            for (ci, &j) in perm.iter().enumerate() {
                let want = match (ri < nf, ci < nf) {
                    (true, true) => f64::from(ri == ci),
                    (true, false) => -w[(ri, ci - nf)],
                    _ => 0.0,
                };
                err = err.max((ipi[(i, j)] - want).abs());
            }
        }
        checks.push(Check::at_most(format!("I - Pi_A(P_id) block form {p} N=16"), err, 1e-10));
    }

    // basis invariance of the X-projection
    let st = setup(Pattern::P3, 8, 2, 0, SmootherKind::GsForward, false);
    let x = st.smoother.symmetrized(ExecMode::Sequential).unwrap().to_dense();
    let p = ideal_interp(&st.a, &st.split, ExecMode::Sequential).unwrap().p;
    let nc = p.ncols();
    assert!(nc <= 20);
    let base = x_projection(&p, &x).unwrap();
    let mut r = rng::stream(5, 100);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z = DMatrix::from_vec(nc, nc, rng::uniform_vec(&mut r, nc * nc)) + DMatrix::identity(nc, nc) * 2.0;
        let pz = x_projection(&(&p * z), &x).unwrap();
        worst = worst.max((pz - &base).amax());
    }
    checks.push(Check::at_most("Pi_X(PZ) = Pi_X(P), 20 random Z", worst, 1e-10));

    // μ of the complement of the optimal space and stability of classical-optimal P
    let st = setup(Pattern::P1, 8, 2, 0, SmootherKind::GsForward, false);
    let ms = st.smoother.symmetrized(ExecMode::Sequential).unwrap();
    let msd = ms.to_dense();
    let nc = st.split.nc();
    let full = gen_eig_sym(&st.a, &ms, 0, EigMode::Full, &eig).unwrap();
    let n = st.a.n_rows();
    let s_opt = full.vectors.columns(nc, n - nc).into_owned();
    let mu = mu_closed_form(&st.a, &msd, &s_opt).unwrap();
    let want = 1.0 / full.values[nc];
    checks.push(Check::at_most("mu_M(S_opt) = 1/lambda_{nc+1} (rel)", (mu - want).abs() / want, 1e-8));
    let p_opt = full.vectors.columns(0, nc).into_owned();
    let pbar = classical_scale(&p_opt, &st.split).unwrap();
    let r_opt = optimal_restriction(&p_opt, &st.split, &msd);
    let beta = stability_beta(&st.a, &pbar, &r_opt).unwrap();
    checks.push(Check::at_most("beta(P_bar, R_opt) = 1", (beta - 1.0).abs(), 1e-8));

    // block-factorized smoother with an exact F-solve
    for (p, n, red_black) in [(Pattern::P1, 8, false), (Pattern::P4, 8, false), (Pattern::P2, 8, true)] {
        let field = build_coefficient(p, n, 4, 0, &Geometry::default()).unwrap();
        let a = assemble_fv(&field).unwrap();
        let split = if red_black {
            red_black_coarsening(&field.grid).unwrap()
        } else {
            full_coarsening(&field.grid).unwrap().0
        };
        let spec = SmootherSpec {
            kind: SmootherKind::Hb,
            hb_inner: HbInner::Exact,
            ..SmootherSpec::default()
        };
        let sm = Smoother::from_spec(&spec, &a, Some(&field.grid), Some(&split)).unwrap();
        let ms = sm.symmetrized(ExecMode::Sequential).unwrap();
        let nc = split.nc();
        let pairs = gen_eig_sym(&a, &ms, 0, EigMode::Full, &eig).unwrap();
        let dev = pairs.values[nc..].iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most(format!("HB exact: lambda_{{nc+1..n}} = 1 {p} N={n}"), dev, 1e-8));
        let pe = pairs.vectors.columns(0, nc).into_owned();
        let e = TwoGridOperator::new(&a, Prolongation::Dense(pe), None, Some((sm, 1)))
            .unwrap()
            .to_dense(ExecMode::Sequential);
        let nrm = a_norm_dense(&a.to_dense(), &e);
        checks.push(Check::at_most(format!("HB exact: ||E_TG(P_opt)||_A {p} N={n}"), nrm, 1e-8));
    }
    finish(5, "identity suite", &checks, start, true);
}

#[test]
fn criterion_6_maxvol() {
    let start = Instant::now();
    let mut checks = vec![];
    let cases = [
        (Pattern::P1, SmootherKind::GsForward, 289, 3.0),
        (Pattern::P4, SmootherKind::BlockGsRedblack, 144, 60.0),
    ];
    for (p, kind, nc, bound) in cases {
        let st = setup(p, 35, 4, 0, kind, false);
        let ms = st.smoother.symmetrized(ExecMode::auto()).unwrap();
        let (interp, _) = optimal_interp(&st.a, &ms, nc, &EigOptions::default()).unwrap();
        let res = maxvol_select(&orthonormal_basis(&interp.p), None, &MaxvolOptions::default()).unwrap();
        let label = format!("{p} {kind:?} 35^2 nc={nc}");
        checks.push(Check::at_most(format!("kappa(P_c) {label}"), res.stats.kappa_final, bound));
        let entry = res.pbar.amax();
        checks.push(Check::new(
            format!("max |W| {label}"),
            entry,
            format!("<= {PIVOT_THRESHOLD}, converged"),
            entry <= PIVOT_THRESHOLD && res.stats.converged,
        ));
    }
    finish(6, "maxvol coarse selection", &checks, start, false);
}

#[test]
fn criterion_7_bamg() {
    let start = Instant::now();
    let mut cells = vec![];
    for n in [33, 65] {
        for k in KS {
            for pencil in [Pencil::Msymm, Pencil::Identity] {
                for s in seeds(Pattern::P4) {
                    cells.push((n, k, pencil, s));
                }
            }
        }
    }
    let rates = exec::map_slice(ExecMode::auto(), &cells, |&(n, k, pencil, s)| {
        let field = build_coefficient(Pattern::P4, n, k, s, &Geometry::default()).unwrap();
        let a = assemble_fv(&field).unwrap();
        let cfg = BamgConfig {
            pencil,
            seed: s,
            ..BamgConfig::default()
        };
        bootstrap_setup(&a, &field.grid, &cfg).unwrap().solve_rate(30, s).estimate
    });
    let avg = |n: usize, k: u32, pencil: Pencil| {
        let v: Vec<f64> = cells
            .iter()
            .zip(&rates)
            .filter(|((cn, ck, cp, _), _)| *cn == n && *ck == k && *cp == pencil)
            .map(|(_, r)| *r)
            .collect();
        mean(&v)
    };
    let mut checks = vec![];
    for n in [33, 65] {
        for k in KS {
            let m = avg(n, k, Pencil::Msymm);
            checks.push(Check::within(
                format!("bamg X=M P4 N={n} k={k}"),
                m,
                reference::bamg(false, n, k).unwrap(),
                0.08,
            ));
            if n == 65 && k >= 4 {
                let i = avg(n, k, Pencil::Identity);
                checks.push(Check::at_most(format!("bamg rate(X=M) - rate(X=I) N={n} k={k}"), m - i, 0.0));
            }
        }
    }
    finish(7, "bootstrap AMG rates", &checks, start, false);
}

// ---- criterion 8: dense oracles --------------------------------------------

fn tridiag(n: usize) -> SparseMatrix {
    let mut t = vec![];
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    SparseMatrix::from_triplets(n, n, &t).unwrap()
}

fn random_dense(r: &mut rng::StreamRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_vec(rows, cols, rng::uniform_vec(r, rows * cols))
}

fn random_spd(r: &mut rng::StreamRng, n: usize) -> DMatrix<f64> {
    let b = random_dense(r, n, n);
    &b * b.transpose() + DMatrix::identity(n, n) * n as f64
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Eigenvalues of `(A, B)` by Cholesky reduction to a standard problem.
fn pencil_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let l = b.clone().cholesky().unwrap().l();
    let linv = l.try_inverse().unwrap();
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut v: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn oracle_linalg(checks: &mut Vec<Check>) {
    let mut r = rng::stream(8, 1);

    let d = random_dense(&mut r, 5, 5).map(|v| if v.abs() < 0.3 { 0.0 } else { v });
    let a = SparseMatrix::from_dense(&d);
    let x = rng::uniform_vec(&mut r, 5);
    let want = &d * DVector::from_column_slice(&x);
    checks.push(Check::at_most(
        "CSR mat-vec vs dense (5x5)",
        max_abs_diff(&a.spmv(&x).unwrap(), want.as_slice()),
        1e-14,
    ));

    let field = build_coefficient(Pattern::Constant, 3, 0, 0, &Geometry::default()).unwrap();
    let a = assemble_fv(&field).unwrap();
    let s = red_black_coarsening(&field.grid).unwrap();
    let aff = a.extract_submatrix(s.fine(), s.fine()).unwrap().to_dense();
    let off = (0..aff.nrows())
        .flat_map(|i| (0..aff.ncols()).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| aff[(i, j)].abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("red-black A_ff off-diagonal (3x3 Poisson)", off, 0.0));

    let field = build_coefficient(Pattern::P1, 4, 2, 0, &Geometry::default()).unwrap();
    let a = assemble_fv(&field).unwrap();
    let s = red_black_coarsening(&Grid::new(4)).unwrap();
    let sub = a.extract_submatrix(s.fine(), s.coarse()).unwrap().to_dense();
    let ad = a.to_dense();
    let slice = DMatrix::from_fn(s.nf(), s.nc(), |i, j| ad[(s.fine()[i], s.coarse()[j])]);
    checks.push(Check::at_most("extract A_fc vs dense slicing", (sub - slice).amax(), 0.0));

    let ones = SparseMatrix::from_dense(&DMatrix::from_element(3, 1, 1.0));
    let g = galerkin_sparse(&ones, &tridiag(3)).unwrap();
    checks.push(Check::at_most("1^T A 1 = 2 (1D Laplacian, n=3)", (g.get(0, 0) - 2.0).abs(), 0.0));

    let p = random_dense(&mut r, 16, 5);
    let g = galerkin_dense(&p, &a, ExecMode::Sequential).unwrap();
    let want = p.transpose() * &ad * &p;
    checks.push(Check::at_most("P^T A P vs dense (rel)", (g - &want).amax() / want.amax(), 1e-13));

    let spd = random_spd(&mut r, 20);
    let b = rng::uniform_vec(&mut r, 20);
    let xs = solve_spd_dense(&spd, &b).unwrap();
    let res = &spd * DVector::from_column_slice(&xs) - DVector::from_column_slice(&b);
    checks.push(Check::at_most("SPD solve residual (20x20, rel)", res.norm() / norm(&b), 1e-12));

    let lap = tridiag(10);
    let pairs = gen_eig_sym(&lap, &amglab::linalg::Identity(10), 0, EigMode::Full, &EigOptions::default()).unwrap();
    let exact: Vec<f64> = (1..=10)
        .map(|j| 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / 11.0).cos())
        .collect();
    checks.push(Check::at_most("1D Laplacian spectrum (n=10)", max_abs_diff(&pairs.values, &exact), 1e-10));

    let (a, b) = (random_spd(&mut r, 12), random_spd(&mut r, 12));
    let pairs = gen_eig_sym(&a, &b, 0, EigMode::Full, &EigOptions::default()).unwrap();
    let want = pencil_oracle(&a, &b);
    checks.push(Check::at_most("random SPD pencil (12x12, rel)", max_abs_diff(&pairs.values, &want) / want[11], 1e-10));
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn oracle_problems(checks: &mut Vec<Check>) {
    let f = build_coefficient(Pattern::P2, 8, 2, 0, &Geometry::default()).unwrap();
    let low: Vec<bool> = f.values.iter().map(|v| (v - 1e-2).abs() < 1e-15).collect();
    let count = low.iter().filter(|l| **l).count();
    // 4 x 4 squares of 2 x 2 cells: low iff the square parity matches cell (1, 1)'s
    let parity = |p: usize| {
        let (i, j) = f.grid.cell(p);
        ((i - 1) / 2 + (j - 1) / 2) % 2
    };
    let expected = |p: usize| if parity(p) == parity(0) { low[0] } else { !low[0] };
    let mismatches = (0..64).filter(|&p| low[p] != expected(p)).count();
    checks.push(Check::new("P2 N=8 k=2 checkerboard layout", mismatches as f64, "32 low cells, 0 mismatches", count == 32 && mismatches == 0));

    let f = build_coefficient(Pattern::Constant, 3, 0, 0, &Geometry::default()).unwrap();
    let a = assemble_fv(&f).unwrap();
    checks.push(Check::at_most("corner row diagonal = 6 (3x3, a = 1)", (a.get(0, 0) - 6.0).abs(), 0.0));

    let mut failures = 0;
    for p in Pattern::ALL_JUMP {
        for n in [4, 9, 16] {
            for k in [0, 4, 8] {
                let a = assemble_fv(&build_coefficient(p, n, k, 3, &Geometry::default()).unwrap()).unwrap();
                failures += usize::from(SpdFactor::sparse(&a).is_err());
            }
        }
    }
    checks.push(Check::at_most("Cholesky of every field (N <= 16)", failures as f64, 0.0));

    let f = build_coefficient(Pattern::P4, 32, 8, 2, &Geometry::default()).unwrap();
    let a = assemble_fv(&f).unwrap();
    let s = red_black_coarsening(&f.grid).unwrap();
    let aff = a.extract_submatrix(s.fine(), s.fine()).unwrap();
    let offdiag = (0..aff.n_rows()).map(|i| aff.row(i).0.iter().filter(|&&j| j != i).count()).sum::<usize>();
    checks.push(Check::at_most("red-black A_ff diagonal (P4, N=32)", offdiag as f64, 0.0));

    let part = block_partition(&Grid::new(10), 5).unwrap();
    let ok = part.colors == [Color::Red, Color::Black, Color::Black, Color::Red];
    checks.push(Check::new("N=10 b=5 block colors R,B,B,R", part.blocks.len() as f64, "4 blocks R,B,B,R", ok && part.blocks.len() == 4));
}

fn oracle_smoothers(checks: &mut Vec<Check>) {
    let gs = Sweep::pointwise(&tridiag(3), true).unwrap();
    let got = gs.apply_minv(&[1.0, 0.0, 0.0]);
    checks.push(Check::at_most("forward GS on tridiag(-1,2,-1), r = e_1", max_abs_diff(&got, &[0.5, 0.25, 0.125]), 1e-15));

    let a = tridiag(4);
    let sm = Smoother::Sweep(Sweep::pointwise(&a, true).unwrap());
    let ad = a.to_dense();
    let m = ad.lower_triangle();
    let want = &m * (&m + m.transpose() - &ad).try_inverse().unwrap() * m.transpose();
    let got = sm.symmetrized(ExecMode::Sequential).unwrap().to_dense();
    checks.push(Check::at_most("M(M+M^T-A)^{-1}M^T (1D Laplacian, n=4)", (got - &want).amax(), 1e-12));
    let want_inv = want.try_inverse().unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..4 {
        let mut e = vec![0.0; 4];
        e[j] = 1.0;
        worst = worst.max(max_abs_diff(&sm.apply_msymm_inv(&e), want_inv.column(j).as_slice()));
    }
    checks.push(Check::at_most("M~^{-1} application vs dense inverse", worst, 1e-12));

    // F-relaxation with symmetric GS on A_ff, iterated densely from the same start
    let st = setup(Pattern::Constant, 8, 0, 0, SmootherKind::GsSymmetric, false);
    let rep = cr_frelax_rate(&st.a, &st.split, &st.smoother, 5, 4).unwrap();
    let aff = st.a.extract_submatrix(st.split.fine(), st.split.fine()).unwrap().to_dense();
    let d = DMatrix::from_diagonal(&aff.diagonal());
    let lo = aff.lower_triangle();
    let msym = &lo * d.try_inverse().unwrap() * lo.transpose();
    let step = DMatrix::identity(aff.nrows(), aff.nrows()) - msym.try_inverse().unwrap() * &aff;
    let mut v = DVector::from_vec(rng::uniform_vec(&mut rng::stream(4, streams::CR_START), st.split.nf()));
    let anorm = |v: &DVector<f64>| v.dot(&(&aff * v)).sqrt();
    let mut last = 0.0;
    for _ in 0..5 {
        let before = anorm(&v);
        v = &step * v;
        last = anorm(&v) / before;
    }
    checks.push(Check::at_most("F-relaxation rate vs dense iteration (Poisson 8^2)", (rep.estimate - last).abs(), 1e-10));
}

fn oracle_interp(checks: &mut Vec<Check>) {
    let st = setup(Pattern::P3, 6, 3, 1, SmootherKind::GsForward, false);
    let (s, z) = canonical_injections(&st.split);
    let g = generalized_ideal(&st.a, &s, &z, ExecMode::Sequential).unwrap().p;
    let id = ideal_interp(&st.a, &st.split, ExecMode::Sequential).unwrap().p;
    checks.push(Check::at_most("generalized ideal with canonical S, Z = ideal", (g - id).amax(), 1e-10));

    let grid = Grid::new(9);
    let (split, pattern) = full_coarsening(&grid).unwrap();
    let ones = DMatrix::from_element(81, 1, 1.0);
    let p = ls_interp(&ones, &[1.0], &split, &pattern, 1e-12).unwrap();
    let dev = split
        .fine()
        .iter()
        .map(|&i| (p.row(i).1.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("LS with constant test vector: row sums", dev, 1e-10));

    let mut r = rng::stream(8, 2);
    let tvs = random_dense(&mut r, 81, 6);
    let w = [0.5, 1.0, 2.0, 0.25, 1.5, 3.0];
    let ridge = 1e-12;
    let p = ls_interp(&tvs, &w, &split, &pattern, ridge).unwrap();
    let coarse = split.coarse();
    let (mut worst, mut rows): (f64, usize) = (0.0, 0);
    for &i in split.fine() {
        let set = &pattern.rows[i];
        rows += usize::from(set.len() == 4);
        // (V^T W V + ridge tr I) p = V^T W v_i, solved by LU
        let v = DMatrix::from_fn(6, set.len(), |k, a| tvs[(coarse[set[a]], k)]);
        let wd = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
        let mut g = v.transpose() * &wd * &v;
        let shift = ridge * g.trace();
        for a in 0..set.len() {
            g[(a, a)] += shift;
        }
        let rhs = v.transpose() * &wd * DVector::from_fn(6, |k, _| tvs[(i, k)]);
        let sol = g.lu().solve(&rhs).unwrap();
        let (cols, vals) = p.row(i);
        for (a, &j) in set.iter().enumerate() {
            let got = cols.iter().position(|&c| c == j).map_or(0.0, |q| vals[q]);
            worst = worst.max((got - sol[a]).abs() / sol.amax().max(1.0));
        }
    }
    checks.push(Check::new(
        format!("LS 6 TVs vs normal equations ({rows} rows with |C_i| = 4)"),
        worst,
        "<= 1e-10",
        rows > 0 && worst <= 1e-10,
    ));

    let p = random_dense(&mut r, 6, 3);
    let mut s1 = MaxvolState::new(&p, &[0, 1, 2]).unwrap();
    s1.swap(4, 1).unwrap();
    let s2 = MaxvolState::new(&p, &[0, 4, 2]).unwrap();
    checks.push(Check::at_most("maxvol swap vs recompute (6x3)", (s1.pbar() - s2.pbar()).amax(), 1e-10));

    let p = random_dense(&mut r, 30, 12);
    let c0: Vec<usize> = (0..12).collect();
    let mut s = MaxvolState::new(&p, &c0).unwrap();
    let (i, j, _) = s.max_entry().unwrap();
    let pivot = s.pbar()[(i, j)].abs();
    let det = |c: &[usize]| DMatrix::from_fn(12, 12, |a, b| p[(c[a], b)]).determinant().abs();
    let before = det(s.selected());
    s.swap(i, j).unwrap();
    let after = det(s.selected());
    checks.push(Check::at_most("maxvol det ratio = pivot (nc = 12, rel)", (after / before - pivot).abs() / pivot, 1e-10));
}

fn oracle_analysis(checks: &mut Vec<Check>) {
    let st = setup(Pattern::P1, 12, 2, 0, SmootherKind::GsForward, false);
    let p = ideal_interp(&st.a, &st.split, ExecMode::Sequential).unwrap().p;
    let op = TwoGridOperator::symmetric(&st.a, Prolongation::Dense(p.clone()), &st.smoother, 1).unwrap();
    let ad = st.a.to_dense();
    let n = ad.nrows();
    let m = st.smoother.m_dense(ExecMode::Sequential);
    let id = DMatrix::<f64>::identity(n, n);
    let pre = &id - m.transpose().try_inverse().unwrap() * &ad;
    let post = &id - m.clone().try_inverse().unwrap() * &ad;
    let e = post * (&id - x_projection(&p, &ad).unwrap()) * pre;
    let v = rng::uniform_vec(&mut rng::stream(8, 3), n);
    let want = &e * DVector::from_column_slice(&v);
    checks.push(Check::at_most("E_TG v vs dense assembly (n = 144)", max_abs_diff(&op.apply(&v), want.as_slice()), 1e-12));

    let st = setup(Pattern::P2, 12, 2, 0, SmootherKind::GsForward, false);
    let ms = st.smoother.symmetrized(ExecMode::Sequential).unwrap();
    let nc = st.split.nc();
    let (interp, pairs) = optimal_interp(&st.a, &ms, nc, &EigOptions::default()).unwrap();
    let half = TwoGridOperator::new(&st.a, Prolongation::Dense(interp.p), None, Some((st.smoother.clone(), 1))).unwrap();
    let e = half.to_dense(ExecMode::Sequential);
    let nrm2 = a_norm_dense(&st.a.to_dense(), &e).powi(2);
    checks.push(Check::at_most("||E_TG(P_opt)||_A^2 = 1 - lambda_{nc+1}", (nrm2 - (1.0 - pairs.values[nc])).abs(), 1e-3));

    let st = setup(Pattern::P1, 8, 1, 0, SmootherKind::GsForward, false);
    let p = ideal_interp(&st.a, &st.split, ExecMode::Sequential).unwrap().p;
    let op = TwoGridOperator::symmetric(&st.a, Prolongation::Dense(p), &st.smoother, 1).unwrap();
    let dense = rate_dense_selfadjoint(&op, ExecMode::Sequential).unwrap();
    let sharp = cr_sharp_estimate(&st.a, &st.split, &st.smoother, st.split.nf(), 60, 3).unwrap().estimate;
    checks.push(Check::at_most("sharp estimate with L = n vs ideal rate", (sharp - dense).abs(), 1e-2));

    let st = setup(Pattern::P4, 8, 8, 1, SmootherKind::GsSymmetric, true);
    let delta = cr_frelax_rate(&st.a, &st.split, &st.smoother, 5, 0).unwrap().estimate;
    let bound = condition_bound(&st.split, &st.smoother, delta).unwrap();
    let truth = condition_number(&st.a.extract_submatrix(st.split.fine(), st.split.fine()).unwrap().to_dense());
    checks.push(Check::at_most("condition bound >= kappa(A_ff), red-black P4 (rel shortfall)", ((truth - bound) / truth).max(0.0), 1e-12));

    let st = setup(Pattern::Constant, 8, 0, 0, SmootherKind::GsSymmetric, false);
    let delta = cr_frelax_rate(&st.a, &st.split, &st.smoother, 20, 1).unwrap().estimate;
    let bound = condition_bound(&st.split, &st.smoother, delta).unwrap();
    let truth = condition_number(&st.a.extract_submatrix(st.split.fine(), st.split.fine()).unwrap().to_dense());
    checks.push(Check::new("condition bound >= kappa(A_ff), Poisson", bound, format!(">= {truth:.6}"), bound >= truth));

    let st = setup(Pattern::P3, 6, 2, 0, SmootherKind::GsForward, false);
    let mut r = rng::stream(8, 4);
    let p = ideal_interp(&st.a, &st.split, ExecMode::Sequential).unwrap().p + random_dense(&mut r, 36, 9) * 0.1;
    let rr = (p.transpose() * &p).try_inverse().unwrap() * p.transpose();
    let beta = stability_beta(&st.a, &p, &rr).unwrap();
    let q = &p * &rr;
    let ad = st.a.to_dense();
    let want = *pencil_oracle(&(q.transpose() * &ad * &q), &ad).last().unwrap();
    checks.push(Check::at_most("beta of a random stable P vs dense (rel)", (beta - want).abs() / want, 1e-10));

    let st = setup(Pattern::Constant, 8, 0, 0, SmootherKind::GsForward, false);
    let ms = st.smoother.symmetrized(ExecMode::Sequential).unwrap();
    let sp = spectra_report(&st.a, &ms, &EigOptions::default()).unwrap();
    let ad = st.a.to_dense();
    let mut ea: Vec<f64> = ad.clone().symmetric_eigenvalues().iter().copied().collect();
    ea.sort_by(f64::total_cmp);
    let lmax = ea[ea.len() - 1];
    let ea: Vec<f64> = ea.iter().map(|v| v / lmax).collect();
    let ep = pencil_oracle(&ad, &ms.to_dense());
    let err = max_abs_diff(&sp.a_scaled, &ea).max(max_abs_diff(&sp.pencil, &ep));
    checks.push(Check::at_most("Poisson 8^2 spectra vs dense", err, 1e-10));
}

fn oracle_bamg(checks: &mut Vec<Check>) {
    let cfg = BamgConfig {
        k_r: 4,
        k_e: 4,
        ..BamgConfig::default()
    };
    let field = build_coefficient(Pattern::P4, 17, 4, 0, &Geometry::default()).unwrap();
    let a = assemble_fv(&field).unwrap();
    let h = bootstrap_setup(&a, &field.grid, &cfg).unwrap();
    let last = &h.levels[h.n_levels() - 1];
    let want = pencil_oracle(&last.a.to_dense(), &last.x.to_dense());
    let err = last
        .lambdas
        .iter()
        .zip(&want)
        .map(|(l, w)| (l - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max);
    checks.push(Check::new("coarsest eigenpairs vs dense", err, "<= 1e-10", !last.lambdas.is_empty() && err <= 1e-10));

    let st = setup(Pattern::P1, 9, 2, 0, SmootherKind::GsForward, false);
    let ms = st.smoother.symmetrized(ExecMode::Sequential).unwrap();
    let pairs = gen_eig_sym(&st.a, &ms, 1, EigMode::Smallest, &EigOptions::default()).unwrap();
    let v: Vec<f64> = pairs.vectors.column(0).iter().copied().collect();
    let omega = ls_weights(&v, &st.a, &ms.to_sparse()).unwrap();
    let want = pairs.values[0].powf(-0.5);
    checks.push(Check::at_most("LS weight of the smallest eigenvector (rel)", (omega - want).abs() / want, 1e-10));

    let st = setup(Pattern::P2, 8, 2, 0, SmootherKind::GsForward, false);
    let p = ideal_interp(&st.a, &st.split, ExecMode::Sequential).unwrap().p;
    let h = Hierarchy::from_interpolations(&st.a, vec![SparseMatrix::from_dense(&p)], &cfg).unwrap();
    let ml = h.solve_rate(60, 2).estimate;
    let tg = TwoGridOperator::symmetric(&st.a, Prolongation::Dense(p), &st.smoother, 1).unwrap();
    let reference = rate_a_norm(&tg, &PowerOptions::default()).estimate;
    checks.push(Check::at_most("two-level hierarchy with P_id vs two-grid rate", (ml - reference).abs(), 1e-2));
}

#[test]
fn criterion_8_dense_oracles() {
    let start = Instant::now();
    let mut checks = vec![];
    oracle_linalg(&mut checks);
    oracle_problems(&mut checks);
    oracle_smoothers(&mut checks);
    oracle_interp(&mut checks);
    oracle_analysis(&mut checks);
    oracle_bamg(&mut checks);
    finish(8, "dense oracle equivalence", &checks, start, true);
}

#[test]
fn kappa_sharp_agrees_with_optimal_rate() {
    // the two closed forms read the same eigenvalue
    let st = setup(Pattern::P2, 8, 1, 0, SmootherKind::GsForward, false);
    let ms = st.smoother.symmetrized(ExecMode::Sequential).unwrap();
    let eig = EigOptions::default();
    let (_, rate) = kappa_sharp(&st.a, &ms, st.split.nc(), &eig).unwrap();
    assert_eq!(rate, optimal_rate(&st.a, &ms, st.split.nc(), &eig).unwrap().estimate);
}
