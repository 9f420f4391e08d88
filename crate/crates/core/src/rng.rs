//! Seed derivation for schedule-independent determinism.
//!
//! Every random stream in the simulator is a pure function of the master
//! seed plus a handful of integer tags (round, client id, purpose). Client
//! work can therefore run on any number of workers without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping unrelated streams independent.
pub mod tag {
    pub const SHUFFLE: u64 = 0x01;
    pub const DROPOUT: u64 = 0x02;
    pub const SAMPLE_CLIENTS: u64 = 0x03;
    pub const DISTILL: u64 = 0x04;
    pub const MEMORY: u64 = 0x05;
    pub const TEST_SPLIT: u64 = 0x06;
    pub const PUBLIC_SPLIT: u64 = 0x07;
    pub const INIT: u64 = 0x08;
    pub const DIRICHLET: u64 = 0x09;
    pub const CLIENT: u64 = 0x0a;
}

/// SplitMix64 finalizer; a fixed, platform-independent bit mixer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a master seed and tag sequence into a single stream seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = mix(master);
    for &p in parts {
        state = mix(state ^ mix(p));
    }
    state
}

/// A deterministic RNG for the stream identified by `(master, parts)`.
pub fn stream(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
