//! Random stream derivation.
//!
//! All simulations draw from [`SimRng`] (PCG64 with a 128-bit multiplicative
//! state), seeded through [`stream`]. Per-replicate seeds are
//! `replicate_seed(master, i) = splitmix64(master ^ splitmix64(i + 1))`, where
//! `splitmix64` is the finalizer of Steele, Lea and Flood's SplitMix64 generator.

use std::ops::Range;

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;

pub type SimRng = Pcg64Mcg;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function applied to `x + golden gamma`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

/// Derives a child seed from a master seed and a label path, e.g. (panel, grid point).
pub fn child_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &p| replicate_seed(acc, p))
}

pub fn stream(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn replicate_stream(master: u64, index: u64) -> SimRng {
    stream(replicate_seed(master, index))
}

/// Replicates per aggregation block. Blocks are the unit of parallel work and are
/// always combined in index order, which makes ensemble statistics independent of
/// the number of worker threads.
pub const BLOCK_SIZE: u64 = 256;

/// Evaluates `f` on consecutive replicate ranges of [`BLOCK_SIZE`] in parallel
/// (on the current rayon pool) and returns the results in range order.
pub fn map_blocks<B, F>(replicates: u64, f: F) -> Vec<B>
where
    B: Send,
    F: Fn(Range<u64>) -> B + Sync,
{
    let blocks = replicates.div_ceil(BLOCK_SIZE);
    (0..blocks)
        .into_par_iter()
        .map(|b| f(b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(replicates)))
        .collect()
}
