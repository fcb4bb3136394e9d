//! Keyed random streams.
//!
//! Every stochastic routine takes an explicit generator. Studies derive one
//! generator per `(seed, cell, replication, purpose)` key, so the draws of a
//! replication do not depend on which other replications ran or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for a single seed.
pub fn seeded(seed: u64) -> StreamRng {
    stream(&[seed])
}

/// Generator keyed on an arbitrary tuple of integers.
pub fn stream(key: &[u64]) -> StreamRng {
    let mut h = 0x6A09_E667_F3BC_C908u64;
    for &k in key {
        h = splitmix64(h ^ splitmix64(k));
    }
    let mut bytes = [0u8; 32];
    let mut s = h;
    for chunk in bytes.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Stable 64-bit tag for a short label, used as a key component.
pub fn tag(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}
