//! Counter-based random streams.
//!
//! Every replicate, draw or imputation chain gets its own generator derived
//! from `(master seed, domain, index)`, so results never depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains. Distinct domains never share a stream even for equal indices.
pub mod domain {
    pub const BOOTSTRAP: u64 = 0x01;
    pub const POSTERIOR: u64 = 0x02;
    pub const IMPUTATION: u64 = 0x03;
    pub const MI_BOOTSTRAP: u64 = 0x04;
    pub const DESIGN: u64 = 0x05;
    pub const ARRIVAL: u64 = 0x06;
    pub const SAMPLE: u64 = 0x07;
    pub const SYNTH: u64 = 0x08;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; used to hand independent master seeds to nested runs.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain)) ^ index)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}
