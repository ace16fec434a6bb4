//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 seeded with a `u64`
//! through [`seeded`]. Sub-streams are derived with [`derive`] so that adding
//! draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Seed used when none is given on the command line.
pub const DEFAULT_SEED: u64 = 0x05ee_df2a_c7a1;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for `(seed, stream)`, mixed with splitmix64.
pub fn derive(seed: u64, stream: u64) -> Rng {
    seeded(splitmix64(seed ^ splitmix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
