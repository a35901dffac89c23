//! Greedy maximal-volume selection of coarse variables.
//!
//! Starting from an invertible `nc x nc` row block `P_C` of a tall matrix
//! `P`, the state keeps `B = P P_C^{-1}` (identity on the selected rows) and
//! repeatedly swaps in the row/column of the largest entry of `B`. Each swap
//! multiplies `|det P_C|` by that entry, so the loop stops at a dominant
//! block where every entry of `B` is at most one in magnitude.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::coarse_rows;
use crate::linalg::solve::condition_number;
use crate::linalg::DenseLu;
use crate::rng::{self, streams};

/// Swap threshold: a pivot must exceed this magnitude.
pub const PIVOT_THRESHOLD: f64 = 1.0 + 1e-12;

/// Number of random starts tried before giving up on a singular block.
pub const MAX_STARTS: usize = 20;

#[derive(Debug, Clone)]
pub struct MaxvolState {
    /// `c[j]` is the row of `P` selected for column `j`.
    c: Vec<usize>,
    in_c: Vec<bool>,
    /// `P P_C^{-1}`, `n x nc`.
    pbar: DMatrix<f64>,
    swaps: usize,
    log_det: f64,
}

impl MaxvolState {
    /// Factors the block of `p` at rows `c`.
    pub fn new(p: &DMatrix<f64>, c: &[usize]) -> Result<Self> {
        let (n, nc) = p.shape();
        if c.len() != nc {
            return Err(Error::DimensionMismatch(format!(
                "{} selected rows for {nc} columns",
                c.len()
            )));
        }
        let mut in_c = vec![false; n];
        for &i in c {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, dim: n });
            }
            if in_c[i] {
                return Err(Error::DuplicateIndex(i));
            }
            in_c[i] = true;
        }
        let pc = DMatrix::from_fn(nc, nc, |i, j| p[(c[i], j)]);
        let lu = DenseLu::factor(&pc)?;
        let mut pbar = lu.solve_right(p);
        for (k, &i) in c.iter().enumerate() {
            for j in 0..nc {
                pbar[(i, j)] = if j == k { 1.0 } else { 0.0 };
            }
        }
        Ok(Self {
            c: c.to_vec(),
            in_c,
            pbar,
            swaps: 0,
            log_det: lu.log_abs_det(),
        })
    }

    pub fn selected(&self) -> &[usize] {
        &self.c
    }

    pub fn pbar(&self) -> &DMatrix<f64> {
        &self.pbar
    }

    pub fn swaps(&self) -> usize {
        self.swaps
    }

    /// `log |det P_C|` tracked through the updates.
    pub fn log_abs_det(&self) -> f64 {
        self.log_det
    }

    /// Largest `|B_ij|` over the unselected rows, ties broken by the
    /// smallest `i` and then the smallest `j`.
    pub fn max_entry(&self) -> Option<(usize, usize, f64)> {
        let (n, nc) = self.pbar.shape();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if self.in_c[i] {
                continue;
            }
            for j in 0..nc {
                let v = self.pbar[(i, j)].abs();
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    /// Replaces the row selected for column `j` by row `i` and updates `B`
    /// with a rank-one correction. Requires a nonzero pivot; unlike
    /// [`MaxvolState::rank_one_update`] it may decrease the volume.
    pub fn swap(&mut self, i: usize, j: usize) -> Result<()> {
        let (n, nc) = self.pbar.shape();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, dim: n });
        }
        if j >= nc {
            return Err(Error::IndexOutOfRange { index: j, dim: nc });
        }
        if self.in_c[i] {
            return Err(Error::InvalidArgument(format!("row {i} already selected")));
        }
        let pivot = self.pbar[(i, j)];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let col: DVector<f64> = self.pbar.column(j).into_owned();
        let mut row: DVector<f64> = self.pbar.row(i).transpose();
        row[j] -= 1.0;
        self.pbar.ger(-1.0 / pivot, &col, &row, 1.0);

        let old = self.c[j];
        self.in_c[old] = false;
        self.in_c[i] = true;
        self.c[j] = i;
        for k in 0..nc {
            self.pbar[(i, k)] = if k == j { 1.0 } else { 0.0 };
        }
        self.log_det += pivot.abs().ln();
        self.swaps += 1;
        Ok(())
    }

    /// Volume-increasing swap: the pivot must exceed [`PIVOT_THRESHOLD`].
    pub fn rank_one_update(&mut self, i: usize, j: usize) -> Result<()> {
        let pivot = self
            .pbar
            .get((i, j))
            .copied()
            .ok_or(Error::IndexOutOfRange { index: i, dim: self.pbar.nrows() })?;
        if pivot.abs() <= PIVOT_THRESHOLD {
            return Err(Error::InvalidArgument(format!(
                "pivot |{pivot:e}| at ({i}, {j}) does not exceed one"
            )));
        }
        self.swap(i, j)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MaxvolOptions {
    pub max_swaps: usize,
    pub seed: u64,
}

impl Default for MaxvolOptions {
    fn default() -> Self {
        Self {
            max_swaps: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxvolStats {
    pub n: usize,
    pub nc: usize,
    pub starts: usize,
    pub swaps: usize,
    pub log_det_initial: f64,
    pub log_det_final: f64,
    pub kappa_initial: f64,
    pub kappa_final: f64,
    pub max_entry: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct MaxvolResult {
    /// Selected rows, ordered by column.
    pub c: Vec<usize>,
    /// Final `P P_C^{-1}`.
    pub pbar: DMatrix<f64>,
    pub stats: MaxvolStats,
}

impl MaxvolResult {
    /// Selected rows in ascending order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut c = self.c.clone();
        c.sort_unstable();
        c
    }
}

/// Runs the greedy swap loop on `p`.
///
/// `c_init` is used when given and invertible; otherwise uniform random
/// starts are drawn from the seeded stream, up to [`MAX_STARTS`] in total.
/// Hitting `max_swaps` returns the current selection with
/// `converged = false`.
pub fn maxvol_select(
    p: &DMatrix<f64>,
    c_init: Option<&[usize]>,
    opts: &MaxvolOptions,
) -> Result<MaxvolResult> {
    let (n, nc) = p.shape();
    if nc == 0 || nc > n {
        return Err(Error::InvalidArgument(format!("nc = {nc} for n = {n}")));
    }
    let mut rng = rng::stream(opts.seed, streams::MAXVOL_START);
    let mut starts = 0;
    let mut state = None;
    if let Some(c) = c_init {
        starts += 1;
        match MaxvolState::new(p, c) {
            Ok(s) => state = Some(s),
            Err(Error::Singular { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    while state.is_none() && starts < MAX_STARTS {
        starts += 1;
        let c = rng::sample_indices(&mut rng, n, nc);
        if let Ok(s) = MaxvolState::new(p, &c) {
            state = Some(s);
        }
    }
    let mut state = state.ok_or(Error::NoInvertibleStart(starts))?;

    let kappa_initial = condition_number(&coarse_rows_at(p, state.selected()));
    let log_det_initial = state.log_abs_det();
    let mut converged = false;
    let mut max_entry = 0.0;
    loop {
        let Some((i, j, v)) = state.max_entry() else {
            converged = true;
            break;
        };
        max_entry = v.max(1.0);
        if v <= PIVOT_THRESHOLD {
            converged = true;
            break;
        }
        if state.swaps() >= opts.max_swaps {
            break;
        }
        state.rank_one_update(i, j)?;
    }
    let kappa_final = condition_number(&coarse_rows_at(p, state.selected()));
    let stats = MaxvolStats {
        n,
        nc,
        starts,
        swaps: state.swaps(),
        log_det_initial,
        log_det_final: state.log_abs_det(),
        kappa_initial,
        kappa_final,
        max_entry,
        converged,
    };
    Ok(MaxvolResult {
        c: state.c,
        pbar: state.pbar,
        stats,
    })
}

fn coarse_rows_at(p: &DMatrix<f64>, c: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(c.len(), p.ncols(), |i, j| p[(c[i], j)])
}

/// Orthonormal basis of `range(p)` (thin QR).
///
/// The swap sequence, the selected rows and `P P_C^{-1}` do not depend on
/// the basis of `range(P)`, but `κ(P_C)` does; in this basis it depends
/// only on the subspace and `C`, which makes it comparable across solvers
/// that normalize eigenvectors differently.
pub fn orthonormal_basis(p: &DMatrix<f64>) -> DMatrix<f64> {
    p.clone().qr().q()
}

/// `κ_2` of the rows `c` of `p`.
pub fn kappa_rows(p: &DMatrix<f64>, c: &[usize]) -> f64 {
    condition_number(&coarse_rows_at(p, c))
}

/// `κ_2(P_C)` for the sorted coarse set of `split`.
pub fn kappa_pc(p: &DMatrix<f64>, split: &crate::problems::Splitting) -> f64 {
    condition_number(&coarse_rows(p, split))
}

/// Writes the selected rows, one per line, under an `index` header.
pub fn write_selection_csv<W: Write>(w: W, c: &[usize]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index"]).map_err(csv_err)?;
    for i in c {
        wr.write_record([i.to_string()]).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes the stats as a header plus one row.
pub fn write_stats_csv<W: Write>(w: W, stats: &MaxvolStats) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.serialize(stats).map_err(csv_err)?;
    wr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, 99);
        DMatrix::from_fn(n, m, |_, _| r.random_range(-1.0..1.0))
    }

    #[test]
    fn selection_is_basis_invariant() {
        let p = random(40, 6, 11);
        let z = random(6, 6, 12) + DMatrix::identity(6, 6) * 3.0;
        let opts = MaxvolOptions {
            seed: 2,
            ..MaxvolOptions::default()
        };
        let a = maxvol_select(&p, Some(&[0, 1, 2, 3, 4, 5]), &opts).unwrap();
        let b = maxvol_select(&(&p * &z), Some(&[0, 1, 2, 3, 4, 5]), &opts).unwrap();
        let q = orthonormal_basis(&p);
        let c = maxvol_select(&q, Some(&[0, 1, 2, 3, 4, 5]), &opts).unwrap();
        assert_eq!(a.sorted(), b.sorted());
        assert_eq!(a.sorted(), c.sorted());
        assert!((&a.pbar - &c.pbar).amax() < 1e-10);
        assert!((q.transpose() * &q - DMatrix::identity(6, 6)).amax() < 1e-12);
        assert!((kappa_rows(&q, &c.c) - c.stats.kappa_final).abs() < 1e-8 * c.stats.kappa_final);
    }

    fn recompute(p: &DMatrix<f64>, c: &[usize]) -> DMatrix<f64> {
        let pc = coarse_rows_at(p, c);
        p * pc.try_inverse().unwrap()
    }

    #[test]
    fn identity_block_needs_no_swaps() {
        let c = [2, 5, 7];
        let mut p = random(10, 3, 1) * 0.5;
        for (k, &i) in c.iter().enumerate() {
            p.row_mut(i).fill(0.0);
            p[(i, k)] = 1.0;
        }
        let res = maxvol_select(&p, Some(&c), &MaxvolOptions::default()).unwrap();
        assert_eq!(res.stats.swaps, 0);
        assert_eq!(res.c, c.to_vec());
        assert_eq!(res.stats.kappa_final, 1.0);
    }

    #[test]
    fn single_swap_matches_recompute() {
        let p = random(6, 3, 2);
        let mut s = MaxvolState::new(&p, &[0, 1, 2]).unwrap();
        let (i, j, _) = s.max_entry().unwrap();
        s.swap(i, j).unwrap();
        let full = recompute(&p, s.selected());
        assert!((s.pbar() - full).amax() < 1e-10);
    }

    #[test]
    fn swap_back_restores() {
        let p = random(9, 4, 3);
        let mut s = MaxvolState::new(&p, &[1, 3, 5, 7]).unwrap();
        let orig = s.pbar().clone();
        s.swap(0, 2).unwrap();
        s.swap(5, 2).unwrap();
        assert_eq!(s.selected(), &[1, 3, 5, 7]);
        assert!((s.pbar() - orig).amax() < 1e-9);
    }

    #[test]
    fn det_ratio_equals_pivot() {
        let p = random(20, 8, 4);
        let c: Vec<usize> = (0..8).collect();
        let mut s = MaxvolState::new(&p, &c).unwrap();
        let det0 = coarse_rows_at(&p, s.selected()).determinant().abs();
        let (i, j, v) = s.max_entry().unwrap();
        s.swap(i, j).unwrap();
        let det1 = coarse_rows_at(&p, s.selected()).determinant().abs();
        assert!((det1 / det0 - v).abs() < 1e-10 * v);
        assert!((s.log_abs_det() - det1.ln()).abs() < 1e-10);
    }

    #[test]
    fn rank_one_update_rejects_small_pivot() {
        let p = random(6, 2, 5);
        let mut s = MaxvolState::new(&p, &[0, 1]).unwrap();
        s.pbar[(3, 0)] = 0.5;
        assert!(s.rank_one_update(3, 0).is_err());
    }

    #[test]
    fn converges_to_dominant_block() {
        let p = random(60, 10, 6);
        let res = maxvol_select(&p, None, &MaxvolOptions { seed: 7, ..Default::default() }).unwrap();
        assert!(res.stats.converged);
        assert!(res.stats.max_entry <= PIVOT_THRESHOLD);
        assert!(res.stats.log_det_final >= res.stats.log_det_initial);
        let full = recompute(&p, &res.c);
        assert!(full.amax() <= 1.0 + 1e-9);
    }

    #[test]
    fn singular_start_falls_back_to_random() {
        let mut p = random(12, 3, 8);
        p.row_mut(0).fill(0.0);
        let res = maxvol_select(&p, Some(&[0, 1, 2]), &MaxvolOptions::default()).unwrap();
        assert!(res.stats.starts >= 2);
        assert!(!res.c.contains(&0));
    }

    #[test]
    fn rank_deficient_input_fails() {
        let p = DMatrix::from_fn(8, 2, |i, _| i as f64);
        assert!(matches!(
            maxvol_select(&p, None, &MaxvolOptions::default()),
            Err(Error::NoInvertibleStart(MAX_STARTS))
        ));
    }

    #[test]
    fn swap_limit_sets_flag() {
        let p = random(60, 10, 9);
        let res = maxvol_select(&p, None, &MaxvolOptions { max_swaps: 1, seed: 1 }).unwrap();
        assert_eq!(res.stats.swaps, 1);
        assert!(!res.stats.converged);
    }

    #[test]
    fn stats_csv_has_header_and_row() {
        let p = random(10, 2, 10);
        let res = maxvol_select(&p, None, &MaxvolOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &res.stats).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert!(s.starts_with("n,nc,starts,swaps"));
    }
}
