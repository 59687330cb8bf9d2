//! Deterministic randomness.
//!
//! Every random decision in the crate (splits, folds, synthetic fixtures)
//! draws from ChaCha8 seeded with a 64-bit seed through
//! [`SeedableRng::seed_from_u64`]. Shuffles use an explicit Fisher–Yates
//! pass so that the permutation depends only on the raw `u64` stream and not
//! on the sampling internals of any particular `rand` release:
//!
//! ```text
//! for i in (1..n).rev():
//!     j = (next_u64() as u128 * (i + 1) as u128) >> 64
//!     swap(i, j)
//! ```

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `0..bound` by widening multiplication.
pub fn index_below(rng: &mut impl RngCore, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}

/// Derives an independent child seed (SplitMix64 finalizer over `base ^ salt`).
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
