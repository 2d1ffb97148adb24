//! Seed handling. Every random object is derived from one root seed.
//!
//! `derive_seed(root, domain, index)` mixes the three words with SplitMix64,
//! so couplings, starts and noise never share a ChaCha key even when the
//! user passes the same root everywhere. Langevin noise for replicate `i`
//! uses `ChaCha8Rng::seed_from_u64(root)` with `set_stream(i)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_COUPLINGS: u64 = 0x4a_01;
pub const DOMAIN_STARTS: u64 = 0x57_02;
pub const DOMAIN_NOISE: u64 = 0x4e_03;
pub const DOMAIN_SAMPLES: u64 = 0x53_04;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ domain) ^ index)
}

/// Generator for `(root, domain, index)`.
pub fn rng_for(root: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, domain, index))
}

/// Noise stream of replicate `index` under root seed `root`.
pub fn replica_stream(root: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(root, DOMAIN_NOISE, 0));
    rng.set_stream(index);
    rng
}
