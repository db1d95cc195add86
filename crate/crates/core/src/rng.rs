//! Seeded random streams.
//!
//! Every patch gets its own stream derived from the global seed and the
//! patch coordinate, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SnisRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SnisRng {
    SnisRng::seed_from_u64(seed)
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of coordinates into a new seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Independent stream for the patch whose top-left corner is `(row, col)`.
pub fn patch_stream(seed: u64, row: usize, col: usize) -> SnisRng {
    seeded(derive_seed(seed, &[row as u64, col as u64]))
}
