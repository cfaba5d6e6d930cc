//! Seed derivation.
//!
//! Every random stream in a run is derived from one master seed by mixing in
//! a stage tag and an index with SplitMix64, so re-running a single stage
//! reproduces exactly the stream a full run would have used.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from `master` for stage `tag` and item `index`.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(tag)) ^ splitmix64(index.wrapping_add(1)))
}

/// Derives a child seed from a string key, e.g. a slide id.
pub fn derive_str(master: u64, tag: &str, key: &str) -> u64 {
    derive(master, tag, fnv1a(key))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
