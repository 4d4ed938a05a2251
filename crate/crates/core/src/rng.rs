//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `u64` seed. Independent
//! replications derive their generators from `(seed, stream)` pairs on the
//! ChaCha20 counter-based generator, so parallel jobs never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Generator for a single seed, stream 0.
pub fn seeded(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Generator for the `stream`-th independent stream under `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed; used where an API takes a plain seed rather than a
/// generator.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
