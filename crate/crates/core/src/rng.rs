//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! master seed and a short tag path, so results do not depend on the order in
//! which independent components are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
pub mod tag {
    pub const ACTOR_INIT: u64 = 1;
    pub const CRITIC_INIT: u64 = 2;
    pub const STATIONARY: u64 = 3;
    pub const VISITATION: u64 = 4;
    pub const SIMULATE: u64 = 5;
    pub const MONTE_CARLO: u64 = 6;
    pub const VERIFY: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag path into a single 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x51))))
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}

/// Inverse-CDF draw from a probability vector given a uniform `u` in [0, 1).
///
/// Falls back to the last index with positive mass when rounding leaves the
/// cumulative sum just below `u`.
pub fn inverse_cdf(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in pmf.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}
