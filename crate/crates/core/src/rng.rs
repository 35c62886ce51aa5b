//! Seeded, splittable random streams.
//!
//! Every stochastic routine takes a caller-owned [`Stream`]. Independent
//! streams are derived from a root seed and a path of integer tags, so a
//! trial's randomness depends only on `(seed, scenario, grid point, trial)`
//! and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `seed` refined by `tags`.
pub fn stream(seed: u64, tags: &[u64]) -> Stream {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    let mut w = h;
    for chunk in key.chunks_mut(8) {
        w = splitmix64(w);
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// 64-bit FNV-1a, used for stable textual keys (scenario ids, cache keys).
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
