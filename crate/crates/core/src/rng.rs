//! Seed derivation.
//!
//! Every random stream in a run is a [`ChaCha8Rng`] seeded from a 64-bit value
//! obtained by chaining [`derive_run_seed`]. The mixer is the SplitMix64
//! finalizer applied to `master + (index + 1) * 0x9E3779B97F4A7C15`
//! (wrapping arithmetic), so any stream can be recomputed independently of
//! execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `run_index`-th child stream of `master_seed`.
pub fn derive_run_seed(master_seed: u64, run_index: u64) -> u64 {
    mix64(master_seed.wrapping_add(run_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Stream labels inside one run. Each year and agent gets its own stream so
/// the order agents are processed in never changes the draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Stream {
    Init = 0,
    Agent = 1,
    Vital = 2,
}

pub(crate) fn init_rng(run_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_run_seed(run_seed, Stream::Init as u64))
}

pub(crate) fn year_seed(run_seed: u64, year_index: u64) -> u64 {
    derive_run_seed(run_seed, year_index.wrapping_add(16))
}

pub(crate) fn agent_rng(year_seed: u64, agent: usize) -> ChaCha8Rng {
    let s = derive_run_seed(year_seed, Stream::Agent as u64);
    ChaCha8Rng::seed_from_u64(derive_run_seed(s, agent as u64))
}

pub(crate) fn vital_rng(year_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_run_seed(year_seed, Stream::Vital as u64))
}
