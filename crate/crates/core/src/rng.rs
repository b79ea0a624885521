//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(master seed, purpose)` and
//! positioned on the 64-bit stream `index`, so the draws of path `p` never
//! depend on how paths are split across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream purposes. Distinct purposes never share key material.
pub mod purpose {
    pub const INCREMENTS: u64 = 1;
    pub const PATH_SAMPLES: u64 = 2;
    pub const LATTICES: u64 = 3;
    pub const HAMILTONIAN_SAMPLES: u64 = 4;
    pub const PROPERTY_SUITE: u64 = 5;
    /// Independent batches behind regressed continuation values.
    pub const CONTINUATION: u64 = 6;
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let key = mix(seed ^ mix(purpose.wrapping_mul(0xd6e8_feb8_6659_fd93)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Fills `out` with independent `N(0, var)` draws.
pub fn fill_normal<R: Rng>(rng: &mut R, var: f64, out: &mut [f64]) {
    let sd = var.sqrt();
    for x in out {
        let z: f64 = rng.sample(StandardNormal);
        *x = sd * z;
    }
}
