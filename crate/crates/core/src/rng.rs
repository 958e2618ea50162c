//! Reproducible random streams keyed by `(seed, domain, index)`.
//!
//! Every replication or bootstrap draw owns its own ChaCha stream, so results
//! do not depend on how work is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept apart so that e.g. data draws and bootstrap weights
/// never share a stream.
pub mod domain {
    pub const BOOTSTRAP: u64 = 0x6273;
    pub const DATA: u64 = 0x6467;
    pub const WARP: u64 = 0x7770;
    pub const REPLICATION: u64 = 0x7270;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

/// Seed for a derived computation, e.g. the bootstrap of replication `index`.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(domain)) ^ index)
}

/// One Rademacher weight, `±1` with equal probability.
pub fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}
