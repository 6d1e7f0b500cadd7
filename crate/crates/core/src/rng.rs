//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit generator. Independent streams
//! are derived from a parent seed with [`derive_seed`], so per-pixel or
//! per-run streams do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator seeded directly from `seed`.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child seed for stream `index` of `parent` (SplitMix64 finalizer over the
/// pair).
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(parent: u64, index: u64) -> SimRng {
    seeded(derive_seed(parent, index))
}
