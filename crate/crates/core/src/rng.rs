//! Deterministic random streams split from a single seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, purpose, index)`; streams for distinct keys are
/// independent and do not depend on evaluation order.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ purpose.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}
