//! Seed derivation. Every random stream in a run is derived from the root
//! seed plus a fixed tuple of labels, so iteration order never changes draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_POLY: u64 = 0x706f_6c79;
pub(crate) const TAG_HANDSHAKE: u64 = 0x6873_6b65;
pub(crate) const TAG_KEYDIST: u64 = 0x6b65_7964;
pub(crate) const TAG_POWER: u64 = 0x706f_7772;
pub(crate) const TAG_INITIAL: u64 = 0x696e_6974;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of `(seed, parts...)`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}
