//! Seeded, splittable random streams.
//!
//! Every random draw in the crate goes through a [`StreamRng`] derived from a
//! 64-bit seed plus a stream id, so independent consumers (test vectors,
//! initial guesses, coefficient draws) never share a sequence and a recorded
//! seed reproduces every output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids for the different random consumers.
pub mod streams {
    pub const COEFFICIENT: u64 = 1;
    pub const POWER_ITERATION: u64 = 2;
    pub const CR_START: u64 = 3;
    pub const MAXVOL_START: u64 = 4;
    pub const TEST_VECTORS: u64 = 5;
    pub const SOLVE_START: u64 = 6;
    pub const EIGEN_START: u64 = 7;
}

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Vector of i.i.d. uniform(-1, 1) entries.
pub fn uniform_vec(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Uniform sample of `k` distinct indices from `0..n`, returned sorted.
pub fn sample_indices(rng: &mut StreamRng, n: usize, k: usize) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}
