//! Seeded random number generation.
//!
//! Every stochastic operation takes an explicit `u64` seed. Sub-streams are
//! derived with [`derive_seed`], so batch work split across workers produces
//! the same numbers regardless of how the batch is partitioned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every stochastic operation in the crate.
pub type DpmeRng = ChaCha8Rng;

/// Builds the generator for `seed`.
pub fn rng_from_seed(seed: u64) -> DpmeRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministically derives the seed of sub-stream `index` from `seed`
/// (two rounds of the SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = splitmix(seed ^ 0x9E37_79B9_7F4A_7C15);
    z = splitmix(z.wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
