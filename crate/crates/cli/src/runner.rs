//! Evaluates every (study, pattern, N, k, seed) cell of a config.

use amglab::analysis::{
    cr_frelax_rate, cr_sharp_estimate, kappa_sharp, optimal_rate, rate_a_norm, spectra_report, PowerOptions,
    Prolongation, RateReport, TwoGridOperator,
};
use amglab::bamg::{bootstrap_setup, Pencil};
use amglab::interp::{ideal_interp, optimal_interp};
use amglab::linalg::eig::EigOptions;
use amglab::linalg::SparseMatrix;
use amglab::maxvol::{kappa_rows, maxvol_select, orthonormal_basis, write_selection_csv, write_stats_csv, MaxvolOptions};
use amglab::problems::{assemble_fv, build_coefficient, full_coarsening, red_black_coarsening, Grid, Pattern, Splitting};
use amglab::smoothers::{Smoother, SmootherKind, Symmetrized};
use amglab::{exec, ExecMode};
use serde::{Deserialize, Serialize};

use crate::config::{Coarsening, ExperimentConfig, Method, Study};
use crate::output::{csv_string, Sink};

/// One line of `rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub study: String,
    pub problem: String,
    pub k: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub smoother: String,
    pub coarsening: String,
    pub method: String,
    pub estimate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// `ok`, `not_converged` or `error: <message>`.
    pub status: String,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    study: usize,
    pattern: Pattern,
    n: usize,
    k: u32,
    seed: u64,
}

pub fn study_name(cfg: &ExperimentConfig, i: usize) -> String {
    cfg.studies[i].name.clone().unwrap_or_else(|| format!("study{i}"))
}

pub fn smoother_name(kind: SmootherKind) -> &'static str {
    match kind {
        SmootherKind::GsForward => "gs_forward",
        SmootherKind::GsBackward => "gs_backward",
        SmootherKind::GsSymmetric => "gs_symmetric",
        SmootherKind::BlockGsRedblack => "block_gs_redblack",
        SmootherKind::Hb => "hb",
    }
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = vec![];
    for (i, s) in cfg.studies.iter().enumerate() {
        let patterns = s.patterns.as_ref().unwrap_or(&cfg.problem.patterns);
        let sizes = cfg.capped(s.sizes.as_ref().unwrap_or(&cfg.problem.sizes));
        let ks = s.ks.as_ref().unwrap_or(&cfg.problem.ks);
        for &pattern in patterns {
            for &n in &sizes {
                for &k in ks {
                    for seed in cfg.seeds(pattern) {
                        out.push(Cell {
                            study: i,
                            pattern,
                            n,
                            k,
                            seed,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Runs all cells (in parallel unless `threads == 1`) and writes the
/// per-cell artifacts; returns the rate rows in cell order.
pub fn run(cfg: &ExperimentConfig, sink: &Sink) -> Vec<RateRow> {
    let mode = if cfg.threads == 1 {
        ExecMode::Sequential
    } else {
        ExecMode::auto()
    };
    let cells = cells(cfg);
    exec::map_slice(mode, &cells, |c| run_cell(cfg, c, sink, mode))
        .into_iter()
        .flatten()
        .collect()
}

struct Setup {
    a: SparseMatrix,
    grid: Grid,
    split: Splitting,
    smoother: Smoother,
    nc: usize,
}

fn setup(cfg: &ExperimentConfig, s: &Study, c: &Cell) -> amglab::Result<Setup> {
    let field = build_coefficient(c.pattern, c.n, c.k, c.seed, &cfg.problem.geometry)?;
    let a = assemble_fv(&field)?;
    let grid = field.grid;
    let split = match s.coarsening {
        Coarsening::Full => full_coarsening(&grid)?.0,
        Coarsening::RedBlack => red_black_coarsening(&grid)?,
    };
    // the configured sweep is the pre-smoother; the cycle's `M` is its transpose
    let smoother = Smoother::from_spec(&s.smoother, &a, Some(&grid), Some(&split))?.transpose();
    let nc = s.nc.unwrap_or(split.nc());
    Ok(Setup {
        a,
        grid,
        split,
        smoother,
        nc,
    })
}

fn run_cell(cfg: &ExperimentConfig, c: &Cell, sink: &Sink, mode: ExecMode) -> Vec<RateRow> {
    let s = &cfg.studies[c.study];
    let study = study_name(cfg, c.study);
    let row = |method: String, outcome: amglab::Result<RateReport>| {
        let (estimate, iterations, status) = match outcome {
            Ok(r) => (
                r.estimate,
                r.iterations,
                if r.converged { "ok".to_string() } else { "not_converged".to_string() },
            ),
            Err(e) => (f64::NAN, 0, format!("error: {e}")),
        };
        RateRow {
            study: study.clone(),
            problem: c.pattern.to_string(),
            k: c.k,
            n: c.n,
            smoother: smoother_name(s.smoother.kind).to_string(),
            coarsening: s.coarsening.name().to_string(),
            method,
            estimate,
            iterations,
            seed: c.seed,
            status,
        }
    };
    let st = match setup(cfg, s, c) {
        Ok(st) => st,
        Err(e) => return s.methods.iter().map(|m| row(method_label(cfg, s, *m), Err(e.clone()))).collect(),
    };
    let stem = format!("{study}_{}_n{}_k{}_s{}", c.pattern, c.n, c.k, c.seed);
    let mut msymm: Option<amglab::Result<Symmetrized>> = None;
    let mut rows = vec![];
    for &m in &s.methods {
        let needs_msymm = matches!(m, Method::Optimal | Method::KappaSharp | Method::Maxvol | Method::Spectra);
        if needs_msymm && msymm.is_none() {
            msymm = Some(st.smoother.symmetrized(mode));
        }
        let outcome = match (&msymm, needs_msymm) {
            (Some(Err(e)), true) => Err(e.clone()),
            (Some(Ok(x)), true) => eval(cfg, s, c, &st, Some(x), m, sink, &stem, mode),
            _ => eval(cfg, s, c, &st, None, m, sink, &stem, mode),
        };
        match outcome {
            Ok(reports) => rows.extend(reports.into_iter().map(|(label, r)| row(label, Ok(r)))),
            Err(e) => rows.push(row(method_label(cfg, s, m), Err(e))),
        }
    }
    rows
}

fn method_label(cfg: &ExperimentConfig, s: &Study, m: Method) -> String {
    match m {
        Method::Bamg => match cfg.bamg_for(s).pencil {
            Pencil::Msymm => "bamg_msymm".into(),
            Pencil::Identity => "bamg_identity".into(),
        },
        _ => m.name().into(),
    }
}

#[allow(clippy::too_many_arguments)]
fn eval(
    cfg: &ExperimentConfig,
    s: &Study,
    c: &Cell,
    st: &Setup,
    msymm: Option<&Symmetrized>,
    m: Method,
    sink: &Sink,
    stem: &str,
    mode: ExecMode,
) -> amglab::Result<Vec<(String, RateReport)>> {
    let one = |r: RateReport| vec![(method_label(cfg, s, m), r)];
    let q = &cfg.params;
    let power = PowerOptions {
        tol: q.power_tol,
        max_iter: q.power_max_iter,
        seed: c.seed,
    };
    let eig = EigOptions {
        seed: c.seed,
        exec: mode,
        ..EigOptions::default()
    };
    let io = |e: anyhow::Error| amglab::Error::Io(e.to_string());
    match m {
        Method::Ideal => {
            let p = ideal_interp(&st.a, &st.split, mode)?.p;
            let op = TwoGridOperator::symmetric(&st.a, Prolongation::Dense(p), &st.smoother, 1)?;
            Ok(one(rate_a_norm(&op, &power)))
        }
        Method::Optimal => optimal_rate(&st.a, msymm.expect("pencil"), st.nc, &eig).map(one),
        Method::KappaSharp => {
            let (lam, _) = kappa_sharp(&st.a, msymm.expect("pencil"), st.nc, &eig)?;
            Ok(one(closed(lam, 0)))
        }
        Method::CrFrelax => cr_frelax_rate(&st.a, &st.split, &st.smoother, q.cr_iters, c.seed).map(one),
        Method::CrSharp => {
            cr_sharp_estimate(&st.a, &st.split, &st.smoother, q.sharp_inner, q.cr_iters, c.seed).map(one)
        }
        Method::Maxvol => {
            let (interp, _) = optimal_interp(&st.a, msymm.expect("pencil"), st.nc, &eig)?;
            let opts = MaxvolOptions {
                seed: c.seed,
                ..MaxvolOptions::default()
            };
            let res = maxvol_select(&orthonormal_basis(&interp.p), None, &opts)?;
            let kappa_msymm = kappa_rows(&interp.p, &res.c);
            let mut sel = Vec::new();
            write_selection_csv(&mut sel, &res.sorted())?;
            sink.write_text(&format!("{stem}_maxvol_c.csv"), &String::from_utf8_lossy(&sel))
                .map_err(io)?;
            let mut stats = Vec::new();
            write_stats_csv(&mut stats, &res.stats)?;
            sink.write_text(&format!("{stem}_maxvol_stats.csv"), &String::from_utf8_lossy(&stats))
                .map_err(io)?;
            let cols = interp_columns(&st.grid, &res.c, &res.pbar, q.interp_columns);
            sink.write_text(&format!("{stem}_maxvol_columns.csv"), &csv_string(&cols).map_err(io)?)
                .map_err(io)?;
            let st = &res.stats;
            let flag = |r: RateReport| RateReport {
                converged: st.converged,
                ..r
            };
            Ok(vec![
                ("maxvol".into(), flag(closed(st.kappa_final, st.swaps))),
                ("maxvol_kappa_initial".into(), flag(closed(st.kappa_initial, st.starts))),
                ("maxvol_kappa_msymm_basis".into(), flag(closed(kappa_msymm, st.swaps))),
                ("maxvol_max_entry".into(), flag(closed(st.max_entry, st.swaps))),
            ])
        }
        Method::Bamg => {
            let mut b = cfg.bamg_for(s);
            b.seed = c.seed;
            b.exec = mode;
            let h = bootstrap_setup(&st.a, &st.grid, &b)?;
            let mut summary = Vec::new();
            h.write_summary_csv(&mut summary)?;
            sink.write_text(&format!("{stem}_{}_levels.csv", method_label(cfg, s, m)), &String::from_utf8_lossy(&summary))
                .map_err(io)?;
            Ok(one(h.solve_rate(q.bamg_cycles, c.seed)))
        }
        Method::Spectra => {
            let sp = spectra_report(&st.a, msymm.expect("pencil"), &eig)?;
            let n = sp.pencil.len();
            let rows: Vec<SpectraRow> = (0..n)
                .map(|i| SpectraRow {
                    index: i,
                    nc_over_n: i as f64 / n as f64,
                    a_scaled: sp.a_scaled[i],
                    pencil: sp.pencil[i],
                    optimal_rate: (1.0 - sp.pencil[i]).clamp(0.0, 1.0),
                })
                .collect();
            sink.write_text(&format!("{stem}_spectra.csv"), &csv_string(&rows).map_err(io)?)
                .map_err(io)?;
            let count = sp.count_nonunit(q.unit_tol);
            Ok(one(closed(count as f64 / n as f64, count)))
        }
    }
}

fn closed(estimate: f64, iterations: usize) -> RateReport {
    RateReport {
        estimate,
        method: amglab::analysis::RateMethod::ClosedForm,
        iterations,
        history: vec![],
        converged: true,
    }
}

/// One eigenvalue pair of the spectra file; `optimal_rate` is the two-grid
/// rate `1 - λ_{nc+1}` with `nc = index` coarse variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectraRow {
    pub index: usize,
    pub nc_over_n: f64,
    pub a_scaled: f64,
    pub pencil: f64,
    pub optimal_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ColumnEntry {
    column: usize,
    coarse_index: usize,
    i: usize,
    j: usize,
    value: f64,
}

/// `count` evenly spaced columns of `pbar` as tidy `(column, i, j, value)`
/// rows over the whole grid.
fn interp_columns(grid: &Grid, c: &[usize], pbar: &nalgebra::DMatrix<f64>, count: usize) -> Vec<ColumnEntry> {
    let nc = c.len();
    let count = count.min(nc);
    let mut out = vec![];
    for t in 0..count {
        let col = (t + 1) * nc / (count + 1);
        for p in 0..grid.len() {
            let (i, j) = grid.cell(p);
            out.push(ColumnEntry {
                column: col,
                coarse_index: c[col],
                i,
                j,
                value: pbar[(p, col)],
            });
        }
    }
    out
}
