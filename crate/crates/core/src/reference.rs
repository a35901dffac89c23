//! Published reference values for the two-grid and bootstrap experiments.
//!
//! Rows of the two-grid tables are laid out as in print: for each `k` in
//! [`KS`] the four problems P1..P4, so a row holds 16 numbers.

use serde::Serialize;

use crate::problems::Pattern;

/// Jump exponents of the experiment tables.
pub const KS: [u32; 4] = [1, 2, 4, 8];
/// Grid sizes `N` of the two-grid tables.
pub const TWO_GRID_SIZES: [usize; 4] = [16, 32, 64, 128];
/// Grid sizes `N` of the bootstrap table.
pub const BAMG_SIZES: [usize; 4] = [17, 33, 65, 129];

/// The four blocks of the two-grid table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoGridBlock {
    /// `ρ(E(P_ideal))`.
    Ideal,
    /// Estimate of the ideal rate from the CG-approximated sharp identity.
    Sharp,
    /// F-relaxation compatible relaxation with symmetric Gauss-Seidel.
    FRelax,
    /// `ρ(E(P_opt))`.
    Optimal,
}

impl TwoGridBlock {
    pub const ALL: [TwoGridBlock; 4] = [Self::Ideal, Self::Sharp, Self::FRelax, Self::Optimal];

    fn rows(self) -> &'static [[f64; 16]; 4] {
        match self {
            Self::Ideal => &IDEAL,
            Self::Sharp => &SHARP,
            Self::FRelax => &FRELAX,
            Self::Optimal => &OPTIMAL,
        }
    }
}

#[rustfmt::skip]
const IDEAL: [[f64; 16]; 4] = [
    [0.259, 0.255, 0.300, 0.397, 0.251, 0.251, 0.297, 0.535, 0.250, 0.250, 0.298, 0.577, 0.250, 0.250, 0.294, 0.679],
    [0.260, 0.256, 0.302, 0.445, 0.251, 0.251, 0.301, 0.649, 0.250, 0.250, 0.293, 0.791, 0.250, 0.250, 0.285, 0.887],
    [0.261, 0.256, 0.303, 0.473, 0.251, 0.251, 0.301, 0.714, 0.250, 0.250, 0.294, 0.879, 0.250, 0.250, 0.292, 0.991],
    [0.261, 0.256, 0.305, 0.471, 0.251, 0.251, 0.301, 0.729, 0.250, 0.250, 0.298, 0.924, 0.250, 0.251, 0.294, 0.997],
];

#[rustfmt::skip]
const SHARP: [[f64; 16]; 4] = [
    [0.240, 0.235, 0.249, 0.209, 0.233, 0.231, 0.244, 0.210, 0.232, 0.231, 0.239, 0.217, 0.232, 0.231, 0.231, 0.225],
    [0.245, 0.243, 0.253, 0.198, 0.241, 0.241, 0.250, 0.204, 0.240, 0.241, 0.247, 0.205, 0.240, 0.241, 0.239, 0.220],
    [0.244, 0.242, 0.252, 0.200, 0.239, 0.239, 0.250, 0.205, 0.239, 0.239, 0.247, 0.216, 0.239, 0.239, 0.237, 0.225],
    [0.234, 0.237, 0.220, 0.202, 0.240, 0.240, 0.231, 0.206, 0.240, 0.240, 0.236, 0.214, 0.240, 0.240, 0.238, 0.223],
];

#[rustfmt::skip]
const FRELAX: [[f64; 16]; 4] = [
    [0.242, 0.176, 0.512, 0.693, 0.075, 0.052, 0.493, 0.839, 0.007, 0.005, 0.499, 0.937, 7e-5, 5e-5, 0.500, 0.999],
    [0.243, 0.177, 0.524, 0.786, 0.075, 0.052, 0.520, 0.939, 0.007, 0.005, 0.516, 0.995, 7e-5, 5e-5, 0.512, 1.0],
    [0.244, 0.177, 0.530, 0.777, 0.075, 0.052, 0.527, 0.927, 0.007, 0.005, 0.522, 0.989, 7e-5, 5e-5, 0.515, 1.0],
    [0.244, 0.178, 0.533, 0.790, 0.075, 0.052, 0.526, 0.951, 0.007, 0.005, 0.523, 0.998, 7e-5, 5e-5, 0.517, 1.0],
];

#[rustfmt::skip]
const OPTIMAL: [[f64; 16]; 4] = [
    [0.041, 0.024, 0.124, 0.132, 0.005, 0.002, 0.108, 0.120, 5e-5, 3e-5, 0.102, 0.102, 5e-9, 2.5e-9, 0.065, 0.065],
    [0.042, 0.024, 0.134, 0.148, 0.005, 0.002, 0.131, 0.140, 5e-5, 3e-5, 0.126, 0.128, 5e-9, 2.5e-9, 0.087, 0.117],
    [0.042, 0.024, 0.137, 0.154, 0.005, 0.002, 0.136, 0.152, 5e-5, 3e-5, 0.132, 0.146, 5e-9, 2.5e-9, 0.124, 0.151],
    [0.042, 0.024, 0.140, 0.160, 0.005, 0.002, 0.139, 0.159, 5e-5, 3e-5, 0.136, 0.157, 5e-9, 2.5e-9, 0.127, 0.159],
];

/// Bootstrap solve-phase rates for P4, rows by [`BAMG_SIZES`], columns by [`KS`].
#[rustfmt::skip]
pub const BAMG_MSYMM: [[f64; 4]; 4] = [
    [0.276, 0.377, 0.398, 0.626],
    [0.260, 0.256, 0.302, 0.445],
    [0.261, 0.256, 0.299, 0.427],
    [0.261, 0.256, 0.299, 0.427],
];

/// As [`BAMG_MSYMM`] with the identity pencil.
#[rustfmt::skip]
pub const BAMG_IDENTITY: [[f64; 4]; 4] = [
    [0.357, 0.592, 0.405, 0.966],
    [0.416, 0.591, 0.302, 0.953],
    [0.261, 0.256, 0.303, 0.573],
    [0.261, 0.256, 0.305, 0.571],
];

/// `κ(P_c)` after maxvol on 35² with `k = 4`: P1 and P2 with lexicographic
/// GS and `n_c = 289`, P4 with red-black 5×5 block GS and `n_c = 144`.
pub const MAXVOL_KAPPA_P1: f64 = 1.496;
pub const MAXVOL_KAPPA_P2: f64 = 1.288;
pub const MAXVOL_KAPPA_P4_BLOCK: f64 = 20.529;

/// Sharp estimate for P4, `k = 8`, `N = 32` with red-black coarsening and
/// two inner PCG steps, and the exact two-grid rate it approximates.
pub const SHARP_P4_REDBLACK: f64 = 0.248;
pub const TRUE_P4_REDBLACK: f64 = 0.250;

/// Optimal two-grid rate bound for the Poisson problem with full coarsening.
pub const POISSON_OPTIMAL_BOUND: f64 = 0.14;

fn k_index(k: u32) -> Option<usize> {
    KS.iter().position(|&x| x == k)
}

fn pattern_index(p: Pattern) -> Option<usize> {
    Pattern::ALL_JUMP.iter().position(|&x| x == p)
}

/// Two-grid table entry, or `None` for sizes, patterns or `k` not in print.
pub fn two_grid(block: TwoGridBlock, n: usize, pattern: Pattern, k: u32) -> Option<f64> {
    let row = TWO_GRID_SIZES.iter().position(|&x| x == n)?;
    Some(block.rows()[row][4 * k_index(k)? + pattern_index(pattern)?])
}

/// Bootstrap table entry for P4.
pub fn bamg(identity_pencil: bool, n: usize, k: u32) -> Option<f64> {
    let row = BAMG_SIZES.iter().position(|&x| x == n)?;
    let table = if identity_pencil { &BAMG_IDENTITY } else { &BAMG_MSYMM };
    Some(table[row][k_index(k)?])
}
