//! Jump-coefficient diffusion problems on the unit square.
//!
//! A [`CoefficientField`] assigns a positive diffusion coefficient to each of
//! the `N x N` cells; [`assemble_fv`] builds the cell-centered finite volume
//! matrix with harmonic face averages. The assembled matrix is the negated
//! flux stencil, so it is SPD with a positive diagonal.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::rng;

/// Sign convention of the assembled operator (recorded in output metadata).
pub const SIGN_CONVENTION: &str = "A = -(flux stencil): positive diagonal, negative off-diagonals";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    #[serde(alias = "poisson")]
    Constant,
    P1,
    P2,
    P3,
    P4,
}

impl Pattern {
    pub const ALL_JUMP: [Pattern; 4] = [Pattern::P1, Pattern::P2, Pattern::P3, Pattern::P4];

    pub fn is_random(self) -> bool {
        matches!(self, Pattern::P3 | Pattern::P4)
    }

    pub fn is_checkerboard(self) -> bool {
        matches!(self, Pattern::P2 | Pattern::P4)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pattern::Constant => "constant",
            Pattern::P1 => "P1",
            Pattern::P2 => "P2",
            Pattern::P3 => "P3",
            Pattern::P4 => "P4",
        };
        f.write_str(s)
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" | "poisson" => Ok(Pattern::Constant),
            "p1" => Ok(Pattern::P1),
            "p2" => Ok(Pattern::P2),
            "p3" => Ok(Pattern::P3),
            "p4" => Ok(Pattern::P4),
            _ => Err(Error::InvalidArgument(format!("unknown pattern '{s}'"))),
        }
    }
}

/// How random exponents are drawn for the random patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawGranularity {
    /// One exponent per inclusion / checkerboard square.
    Region,
    /// One exponent per cell inside the low-coefficient region.
    Cell,
}

/// Layout parameters of the coefficient patterns, in unit-square coordinates.
///
/// Inclusions (P1/P3) sit one per tile of an `inclusion_tiles x inclusion_tiles`
/// tiling; inside its tile an inclusion covers the cell centers whose local
/// coordinates lie in `[lo, hi)` per axis, so neighboring inclusions never
/// touch when `lo > 0` or `hi < 1`. The checkerboard (P2/P4) has
/// `checker_tiles` squares per side, shifted by `checker_offset` (a fraction
/// of one square) along both axes; a partial row and column of squares
/// appears when the offset is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub inclusion_tiles: usize,
    pub inclusion_x: (f64, f64),
    pub inclusion_y: (f64, f64),
    pub checker_tiles: usize,
    pub checker_offset: f64,
    /// Exponent granularity for P3.
    pub inclusion_draw: DrawGranularity,
    /// Exponent granularity for P4.
    pub checker_draw: DrawGranularity,
    /// Smallest exponent drawn by the random patterns (largest is `k`).
    pub min_exponent: u32,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            inclusion_tiles: 4,
            inclusion_x: (0.1875, 0.6875),
            inclusion_y: (0.1875, 0.6875),
            checker_tiles: 4,
            checker_offset: 0.0,
            inclusion_draw: DrawGranularity::Region,
            checker_draw: DrawGranularity::Cell,
            min_exponent: 0,
        }
    }
}

/// Structured `N x N` cell grid with lexicographic numbering.
///
/// Cells are addressed 1-based as `(i, j)`; the linear index is
/// `p = (j - 1) N + (i - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n);
        (j - 1) * self.n + (i - 1)
    }

    #[inline]
    pub fn cell(&self, p: usize) -> (usize, usize) {
        (p % self.n + 1, p / self.n + 1)
    }

    /// Cell center in `[0, 1]^2` with the cells tiling the unit square.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let n = self.n as f64;
        ((i as f64 - 0.5) / n, (j as f64 - 0.5) / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub grid: Grid,
    pub pattern: Pattern,
    pub k: u32,
    pub seed: u64,
    pub geometry: Geometry,
    /// Cell values in lexicographic order.
    pub values: Vec<f64>,
}

impl CoefficientField {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Builds a field from explicit cell values (pattern tagged `Constant`).
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch("field values".into()));
        }
        Ok(Self {
            grid: Grid::new(n),
            pattern: Pattern::Constant,
            k: 0,
            seed: 0,
            geometry: Geometry::default(),
            values,
        })
    }

    /// The field as `N` CSV rows (row `j` holds cells `(1..=N, j)`).
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut s = String::new();
        for j in 1..=n {
            let row: Vec<String> = (1..=n).map(|i| format!("{:e}", self.at(i, j))).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

fn tile_and_local(x: f64, tiles: usize) -> (usize, f64) {
    let t = x * tiles as f64;
    let tile = (t.floor() as usize).min(tiles - 1);
    (tile, t - tile as f64)
}

/// Region id of the low-coefficient part containing cell `(i, j)`, if any.
fn low_region(grid: &Grid, g: &Geometry, pattern: Pattern, i: usize, j: usize) -> Option<usize> {
    let (x, y) = grid.center(i, j);
    match pattern {
        Pattern::Constant => None,
        Pattern::P1 | Pattern::P3 => {
            let t = g.inclusion_tiles;
            let (tx, ux) = tile_and_local(x, t);
            let (ty, uy) = tile_and_local(y, t);
            let inside = ux >= g.inclusion_x.0
                && ux < g.inclusion_x.1
                && uy >= g.inclusion_y.0
                && uy < g.inclusion_y.1;
            inside.then_some(ty * t + tx)
        }
        Pattern::P2 | Pattern::P4 => {
            let t = g.checker_tiles as f64;
            let tx = (x * t + g.checker_offset).floor() as usize;
            let ty = (y * t + g.checker_offset).floor() as usize;
            ((tx + ty) % 2 == 1).then_some(ty * (g.checker_tiles + 1) + tx)
        }
    }
}

/// Builds the coefficient field for `pattern` on an `n x n` grid.
///
/// Cells outside the low-coefficient region carry 1; inside it they carry
/// `10^-k` (P1, P2) or `10^-k_r` with `k_r` drawn uniformly from
/// `{min_exponent, ..., k}` (P3, P4).
pub fn build_coefficient(
    pattern: Pattern,
    n: usize,
    k: u32,
    seed: u64,
    geometry: &Geometry,
) -> Result<CoefficientField> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("grid size {n} < 2")));
    }
    if geometry.inclusion_tiles == 0 || geometry.checker_tiles == 0 {
        return Err(Error::InvalidArgument("tile counts must be positive".into()));
    }
    let grid = Grid::new(n);
    let mut values = vec![1.0; n * n];
    if !(0.0..1.0).contains(&geometry.checker_offset) {
        return Err(Error::InvalidArgument("checker offset must lie in [0, 1)".into()));
    }
    let n_regions = geometry.inclusion_tiles.pow(2).max((geometry.checker_tiles + 1).pow(2));
    let lo = geometry.min_exponent.min(k);
    let mut r = rng::stream(seed, rng::streams::COEFFICIENT);
    let region_exp: Vec<u32> = if pattern.is_random() {
        (0..n_regions).map(|_| r.random_range(lo..=k)).collect()
    } else {
        vec![k; n_regions]
    };
    for j in 1..=n {
        for i in 1..=n {
            if let Some(reg) = low_region(&grid, geometry, pattern, i, j) {
                let draw = if pattern.is_checkerboard() {
                    geometry.checker_draw
                } else {
                    geometry.inclusion_draw
                };
                let e = if pattern.is_random() && draw == DrawGranularity::Cell {
                    r.random_range(lo..=k)
                } else {
                    region_exp[reg]
                };
                values[grid.index(i, j)] = 10f64.powi(-(e as i32));
            }
        }
    }
    Ok(CoefficientField {
        grid,
        pattern,
        k,
        seed,
        geometry: *geometry,
        values,
    })
}

#[inline]
fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Cell-centered finite volume matrix with harmonic face coefficients and
/// Dirichlet faces contributing `2 a_cell` to the diagonal.
pub fn assemble_fv(field: &CoefficientField) -> Result<SparseMatrix> {
    let grid = field.grid;
    let n = grid.n;
    if let Some(p) = field.values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "nonpositive coefficient {} at cell {:?}",
            field.values[p],
            grid.cell(p)
        )));
    }
    let mut trip = Vec::with_capacity(5 * n * n);
    for j in 1..=n {
        for i in 1..=n {
            let p = grid.index(i, j);
            let a = field.values[p];
            let mut diag = 0.0;
            // west, east, south, north; the order fixes the diagonal summation
            let nbrs = [
                (i > 1).then(|| (i - 1, j)),
                (i < n).then(|| (i + 1, j)),
                (j > 1).then(|| (i, j - 1)),
                (j < n).then(|| (i, j + 1)),
            ];
            for nb in nbrs {
                match nb {
                    Some((ii, jj)) => {
                        let q = grid.index(ii, jj);
                        let c = harmonic(a, field.values[q]);
                        diag += c;
                        trip.push((p, q, -c));
                    }
                    None => diag += 2.0 * a,
                }
            }
            trip.push((p, p, diag));
        }
    }
    SparseMatrix::from_triplets(n * n, n * n, &trip)
}

/// Partition of `0..n` into fine (F) and coarse (C) points, both sorted, with
/// the permutation that lists F first and then C.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splitting {
    n: usize,
    c: Vec<usize>,
    f: Vec<usize>,
    /// `local[p]`: position of `p` within its own set.
    local: Vec<usize>,
    is_c: Vec<bool>,
}

impl Splitting {
    pub fn from_coarse(n: usize, coarse: &[usize]) -> Result<Self> {
        let mut is_c = vec![false; n];
        for &p in coarse {
            if p >= n {
                return Err(Error::IndexOutOfRange { index: p, dim: n });
            }
            if is_c[p] {
                return Err(Error::DuplicateIndex(p));
            }
            is_c[p] = true;
        }
        let c: Vec<usize> = (0..n).filter(|p| is_c[*p]).collect();
        let f: Vec<usize> = (0..n).filter(|p| !is_c[*p]).collect();
        let mut local = vec![0; n];
        for (k, &p) in c.iter().enumerate() {
            local[p] = k;
        }
        for (k, &p) in f.iter().enumerate() {
            local[p] = k;
        }
        Ok(Self {
            n,
            c,
            f,
            local,
            is_c,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coarse(&self) -> &[usize] {
        &self.c
    }

    pub fn fine(&self) -> &[usize] {
        &self.f
    }

    pub fn nc(&self) -> usize {
        self.c.len()
    }

    pub fn nf(&self) -> usize {
        self.f.len()
    }

    pub fn is_coarse(&self, p: usize) -> bool {
        self.is_c[p]
    }

    /// Position of `p` within C (if coarse) or F (if fine).
    pub fn local_index(&self, p: usize) -> usize {
        self.local[p]
    }

    /// Permutation `perm[new] = old` placing F first, then C.
    pub fn permutation(&self) -> Vec<usize> {
        self.f.iter().chain(self.c.iter()).copied().collect()
    }

    /// `[v_F; v_C]`.
    pub fn permute(&self, v: &[f64]) -> Vec<f64> {
        self.permutation().into_iter().map(|p| v[p]).collect()
    }

    /// Inverse of [`Splitting::permute`].
    pub fn unpermute(&self, w: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        for (new, old) in self.permutation().into_iter().enumerate() {
            v[old] = w[new];
        }
        v
    }

    pub fn gather_fine(&self, v: &[f64]) -> Vec<f64> {
        self.f.iter().map(|&p| v[p]).collect()
    }

    pub fn gather_coarse(&self, v: &[f64]) -> Vec<f64> {
        self.c.iter().map(|&p| v[p]).collect()
    }
}

/// Per-row interpolatory sets: `rows[p]` lists coarse-local column indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpPattern {
    pub rows: Vec<Vec<usize>>,
    pub nc: usize,
}

/// Standard full coarsening (`h -> 2h`): C holds the cells with both indices
/// even. F-points interpolate from their axial C-neighbors when they share a
/// row or column with C-points, and from the diagonal C-neighbors otherwise.
pub fn full_coarsening(grid: &Grid) -> Result<(Splitting, InterpPattern)> {
    let n = grid.n;
    if n < 3 {
        return Err(Error::InvalidArgument(format!("full coarsening needs N >= 3, got {n}")));
    }
    let mut c = Vec::new();
    for j in 1..=n {
        for i in 1..=n {
            if i % 2 == 0 && j % 2 == 0 {
                c.push(grid.index(i, j));
            }
        }
    }
    let split = Splitting::from_coarse(grid.len(), &c)?;
    let coarse_of = |i: usize, j: usize| -> Option<usize> {
        (i >= 1 && j >= 1 && i <= n && j <= n && i % 2 == 0 && j % 2 == 0)
            .then(|| split.local_index(grid.index(i, j)))
    };
    let mut rows = vec![Vec::new(); grid.len()];
    for j in 1..=n {
        for i in 1..=n {
            let p = grid.index(i, j);
            let cand: Vec<(isize, isize)> = match (i % 2 == 0, j % 2 == 0) {
                (true, true) => vec![(0, 0)],
                (true, false) => vec![(0, -1), (0, 1)],
                (false, true) => vec![(-1, 0), (1, 0)],
                (false, false) => vec![(-1, -1), (1, -1), (-1, 1), (1, 1)],
            };
            let mut set: Vec<usize> = cand
                .into_iter()
                .filter_map(|(di, dj)| {
                    let ii = i as isize + di;
                    let jj = j as isize + dj;
                    if ii < 1 || jj < 1 {
                        return None;
                    }
                    coarse_of(ii as usize, jj as usize)
                })
                .collect();
            set.sort_unstable();
            rows[p] = set;
        }
    }
    Ok((
        split,
        InterpPattern {
            rows,
            nc: c.len(),
        },
    ))
}

/// Grid of the coarse level produced by [`full_coarsening`].
pub fn coarse_grid(grid: &Grid) -> Grid {
    Grid::new(grid.n / 2)
}

/// Red-black coarsening: C holds the cells with `i + j` even.
pub fn red_black_coarsening(grid: &Grid) -> Result<Splitting> {
    if grid.n < 2 {
        return Err(Error::InvalidArgument("red-black coarsening needs N >= 2".into()));
    }
    let c: Vec<usize> = (0..grid.len())
        .filter(|&p| {
            let (i, j) = grid.cell(p);
            (i + j) % 2 == 0
        })
        .collect();
    Splitting::from_coarse(grid.len(), &c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Color {
    Red,
    Black,
}

/// Contiguous `b x b` blocks in block-lexicographic order with checkerboard colors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Vec<usize>>,
    pub colors: Vec<Color>,
}

impl BlockPartition {
    /// Every cell in its own block, all red.
    pub fn pointwise(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|p| vec![p]).collect(),
            colors: vec![Color::Red; n],
        }
    }

    /// Block indices with red blocks first, each color in block order.
    pub fn red_black_order(&self) -> Vec<usize> {
        let red = (0..self.blocks.len()).filter(|&b| self.colors[b] == Color::Red);
        let black = (0..self.blocks.len()).filter(|&b| self.colors[b] == Color::Black);
        red.chain(black).collect()
    }
}

pub fn block_partition(grid: &Grid, b: usize) -> Result<BlockPartition> {
    let n = grid.n;
    if b == 0 || n % b != 0 {
        return Err(Error::InvalidArgument(format!("block size {b} does not divide N = {n}")));
    }
    let nb = n / b;
    let mut blocks = Vec::with_capacity(nb * nb);
    let mut colors = Vec::with_capacity(nb * nb);
    for bj in 0..nb {
        for bi in 0..nb {
            let mut cells = Vec::with_capacity(b * b);
            for j in bj * b + 1..=(bj + 1) * b {
                for i in bi * b + 1..=(bi + 1) * b {
                    cells.push(grid.index(i, j));
                }
            }
            blocks.push(cells);
            colors.push(if (bi + bj) % 2 == 0 { Color::Red } else { Color::Black });
        }
    }
    Ok(BlockPartition { blocks, colors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve::SkylineCholesky;

    fn field(p: Pattern, n: usize, k: u32, seed: u64) -> CoefficientField {
        build_coefficient(p, n, k, seed, &Geometry::default()).unwrap()
    }

    #[test]
    fn k_zero_gives_unit_field() {
        let f = field(Pattern::P1, 4, 0, 0);
        assert!(f.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn checkerboard_half_low() {
        let geom = Geometry { checker_tiles: 4, ..Geometry::default() };
        let f = build_coefficient(Pattern::P2, 8, 2, 0, &geom).unwrap();
        let low: Vec<usize> = (0..64).filter(|&p| f.values[p] == 1e-2).collect();
        assert_eq!(low.len(), 32);
        assert!(f.values.iter().all(|v| *v == 1.0 || *v == 1e-2));
        // 2x2 blocks: each cell agrees with its block partner along both axes
        for j in 1..=8 {
            for i in 1..=8 {
                let partner_i = if i % 2 == 1 { i + 1 } else { i - 1 };
                assert_eq!(f.at(i, j), f.at(partner_i, j));
                let partner_j = if j % 2 == 1 { j + 1 } else { j - 1 };
                assert_eq!(f.at(i, j), f.at(i, partner_j));
            }
        }
        // adjacent blocks alternate
        assert_ne!(f.at(1, 1), f.at(3, 1));
        assert_ne!(f.at(1, 1), f.at(1, 3));
    }

    #[test]
    fn random_fields_deterministic_and_in_range() {
        let a = field(Pattern::P4, 8, 4, 1);
        let b = field(Pattern::P4, 8, 4, 1);
        assert_eq!(a, b);
        for v in &a.values {
            assert!(*v == 1.0 || [1e-1, 1e-2, 1e-3, 1e-4].contains(v));
        }
        // per-cell draws: the low squares are not constant
        let distinct: std::collections::BTreeSet<u64> = a.values.iter().map(|v| v.to_bits()).collect();
        assert!(distinct.len() > 2);
        let c = field(Pattern::P3, 16, 8, 3);
        for v in &c.values {
            assert!(*v == 1.0 || (1..=8).any(|e| *v == 10f64.powi(-e)));
        }
    }

    #[test]
    fn inclusions_never_touch() {
        let f = field(Pattern::P1, 32, 2, 0);
        let g = f.grid;
        let region = |i, j| low_region(&g, &f.geometry, Pattern::P1, i, j);
        for j in 1..=32 {
            for i in 1..32 {
                if let (Some(a), Some(b)) = (region(i, j), region(i + 1, j)) {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn unknown_pattern_rejected() {
        assert!("P5".parse::<Pattern>().is_err());
        assert_eq!("p3".parse::<Pattern>().unwrap(), Pattern::P3);
    }

    #[test]
    fn constant_interior_and_corner_rows() {
        let f = field(Pattern::Constant, 3, 0, 0);
        let a = assemble_fv(&f).unwrap();
        let g = f.grid;
        let center = g.index(2, 2);
        let (cols, vals) = a.row(center);
        assert_eq!(cols.len(), 5);
        for (c, v) in cols.iter().zip(vals) {
            assert_eq!(*v, if *c == center { 4.0 } else { -1.0 });
        }
        assert_eq!(a.get(g.index(1, 1), g.index(1, 1)), 6.0);
    }

    #[test]
    fn assembled_matrices_are_spd_and_symmetric() {
        for p in [Pattern::Constant, Pattern::P1, Pattern::P2, Pattern::P3, Pattern::P4] {
            for n in [4, 9, 16] {
                let a = assemble_fv(&field(p, n, 4, 7)).unwrap();
                assert_eq!(a.asymmetry(), 0.0);
                assert!(SkylineCholesky::factor(&a).is_ok(), "{p} {n}");
            }
        }
    }

    #[test]
    fn nonpositive_coefficient_rejected() {
        let f = CoefficientField::from_values(2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(assemble_fv(&f).is_err());
    }

    #[test]
    fn row_sums_vanish_away_from_boundary() {
        let f = field(Pattern::P3, 12, 4, 2);
        let a = assemble_fv(&f).unwrap();
        let ones = vec![1.0; 144];
        let s = a.spmv(&ones).unwrap();
        for p in 0..144 {
            let (i, j) = f.grid.cell(p);
            let interior = i > 1 && j > 1 && i < 12 && j < 12;
            if interior {
                assert!(s[p].abs() <= 1e-15 * a.get(p, p), "row {p}: {}", s[p]);
            } else {
                assert!(s[p] > 0.0);
            }
        }
    }

    #[test]
    fn full_coarsening_sizes() {
        let (s, _) = full_coarsening(&Grid::new(16)).unwrap();
        assert_eq!(s.nc(), 64);
        let (s, _) = full_coarsening(&Grid::new(35)).unwrap();
        assert_eq!(s.nc(), 289);
    }

    #[test]
    fn full_coarsening_three_by_three() {
        let g = Grid::new(3);
        let (s, pat) = full_coarsening(&g).unwrap();
        assert_eq!(s.coarse(), &[g.index(2, 2)]);
        for p in 0..9 {
            assert_eq!(pat.rows[p], vec![0]);
        }
        assert!(full_coarsening(&Grid::new(2)).is_err());
    }

    #[test]
    fn full_coarsening_pattern_rules() {
        let g = Grid::new(6);
        let (s, pat) = full_coarsening(&g).unwrap();
        let cl = |i, j| s.local_index(g.index(i, j));
        assert_eq!(pat.rows[g.index(3, 3)], {
            let mut v = vec![cl(2, 2), cl(4, 2), cl(2, 4), cl(4, 4)];
            v.sort();
            v
        });
        assert_eq!(pat.rows[g.index(2, 3)], vec![cl(2, 2), cl(2, 4)]);
        assert_eq!(pat.rows[g.index(3, 2)], vec![cl(2, 2), cl(4, 2)]);
        assert_eq!(pat.rows[g.index(1, 1)], vec![cl(2, 2)]);
        assert_eq!(pat.rows[g.index(4, 4)], vec![cl(4, 4)]);
    }

    #[test]
    fn red_black_sizes_and_diagonal_ff_block() {
        assert_eq!(red_black_coarsening(&Grid::new(2)).unwrap().nc(), 2);
        let f = field(Pattern::P4, 32, 8, 1);
        let a = assemble_fv(&f).unwrap();
        let s = red_black_coarsening(&f.grid).unwrap();
        let aff = a.extract_submatrix(s.fine(), s.fine()).unwrap();
        for i in 0..aff.n_rows() {
            assert_eq!(aff.row(i).0, &[i]);
        }
    }

    #[test]
    fn red_black_ff_block_on_three_by_three() {
        let f = field(Pattern::Constant, 3, 0, 0);
        let a = assemble_fv(&f).unwrap();
        let s = red_black_coarsening(&f.grid).unwrap();
        let aff = a.extract_submatrix(s.fine(), s.fine()).unwrap();
        assert_eq!(aff.nnz(), 4);
        assert_eq!(aff.diagonal(), vec![5.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn block_partitions() {
        let p = block_partition(&Grid::new(35), 5).unwrap();
        assert_eq!(p.blocks.len(), 49);
        assert!(p.blocks.iter().all(|b| b.len() == 25));
        let p = block_partition(&Grid::new(4), 4).unwrap();
        assert_eq!(p.blocks.len(), 1);
        let p = block_partition(&Grid::new(10), 5).unwrap();
        assert_eq!(p.colors, vec![Color::Red, Color::Black, Color::Black, Color::Red]);
        assert!(block_partition(&Grid::new(10), 3).is_err());
    }

    #[test]
    fn permutation_roundtrip() {
        let s = red_black_coarsening(&Grid::new(5)).unwrap();
        let v: Vec<f64> = (0..25).map(|x| x as f64).collect();
        assert_eq!(s.unpermute(&s.permute(&v)), v);
    }

    #[test]
    fn harmonic_average_is_symmetric() {
        assert_eq!(harmonic(1.0, 1e-4), harmonic(1e-4, 1.0));
    }
}
