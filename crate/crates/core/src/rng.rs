//! Seed derivation for independent, order-free random streams.
//!
//! Every stochastic decision draws from a stream keyed by a master seed and a
//! path of integers (case id, step, rollout index, ...), so results do not
//! depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)))
    })
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream tags keep unrelated consumers of one master seed apart.
pub mod tag {
    pub const ONTOLOGY: u64 = 1;
    pub const CASE: u64 = 2;
    pub const SFT: u64 = 3;
    pub const RL_BATCH: u64 = 4;
    pub const ROLLOUT: u64 = 5;
    pub const EDIT: u64 = 6;
    pub const PROBE: u64 = 7;
}
