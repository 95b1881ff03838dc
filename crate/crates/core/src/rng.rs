//! Seeding for reproducible path ensembles.
//!
//! Every random path is generated by a ChaCha12 stream (`rand_chacha`),
//! which is a counter-based generator: its output is a pure function of a
//! 256-bit key and the block counter. Keys are expanded from 64-bit seeds
//! with SplitMix64:
//!
//! ```text
//! state_0 = seed
//! state_i = state_{i-1} + 0x9E3779B97F4A7C15,  word_i = mix64(state_i)   (i = 1..4)
//! key     = word_1 || word_2 || word_3 || word_4    (little-endian)
//! ```
//!
//! Ensemble member `i` of a run with master seed `m` uses the 64-bit seed
//!
//! ```text
//! path_seed(m, i) = mix64(mix64(m) ^ mix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer. Both functions are part of the
//! output contract: changing them changes every published result, so they
//! must stay fixed across versions.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of ensemble member `index` under `master_seed`.
pub fn path_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed) ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Expands a 64-bit seed into a 256-bit ChaCha key.
pub fn expand_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    key
}

/// Generator used for one path.
pub fn path_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(expand_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn mix64_reference_values() {
        // SplitMix64 with state 0: first output is mix64(0x9E37..), see
        // https://prng.di.unimi.it/splitmix64.c
        assert_eq!(mix64(GOLDEN_GAMMA), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix64(0), 0);
    }

    #[test]
    fn seeds_are_stable() {
        // frozen: changing these breaks reproducibility of every report
        assert_eq!(expand_seed(0)[..8], 0xE220_A839_7B1D_CDAFu64.to_le_bytes());
        let a = path_seed(42, 0);
        let b = path_seed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, path_seed(42, 0));
        let mut r1 = path_rng(7);
        let mut r2 = path_rng(7);
        assert_eq!(r1.next_u64(), r2.next_u64());
    }

    #[test]
    fn distinct_masters_give_distinct_streams() {
        let mut seen = std::collections::HashSet::new();
        for m in 0..16u64 {
            for i in 0..64u64 {
                assert!(seen.insert(path_seed(m, i)));
            }
        }
    }
}
