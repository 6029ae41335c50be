//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a stream keyed by
//! `(seed, counter, purpose tag)`. Streams for different requests are
//! independent, so request-level work can be reordered or parallelized
//! without changing any sampled value.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic RNG for one `(seed, counter, tag)` triple.
pub fn stream(seed: u64, counter: u64, tag: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed ^ splitmix64(counter) ^ tag_hash(tag).rotate_left(17);
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
