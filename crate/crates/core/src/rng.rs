//! Seeded random streams.
//!
//! Every stochastic step (one sample of the generator, one augmentation, one
//! dropout mask) draws from its own ChaCha stream keyed by a master seed and a
//! tuple of indices, so results do not depend on evaluation order or on how
//! many workers share the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible stream for `(seed, key[0], key[1], ...)`.
pub fn stream(seed: u64, key: &[u64]) -> StreamRng {
    let id = key.iter().fold(mix(0x5EED), |acc, &k| mix(acc ^ mix(k)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
