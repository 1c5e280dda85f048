//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value. Sub-streams are derived by folding extra words into a parent
//! seed with the SplitMix64 finalizer, so derived seeds are stable across
//! platforms and releases:
//!
//! ```text
//! h = parent
//! for w in words: h = splitmix64(h ^ splitmix64(w + GOLDEN))
//! ```
//!
//! Text components (architecture labels, stream names) are first reduced to a
//! word with 64-bit FNV-1a.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive(parent: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(parent, |h, &w| splitmix64(h ^ splitmix64(w.wrapping_add(GOLDEN))))
}

/// Derive a named sub-stream seed, e.g. `stream(seed, "embedding")`.
pub fn stream(parent: u64, name: &str) -> u64 {
    derive(parent, &[fnv1a(name.as_bytes())])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
