//! Counter-split random streams.
//!
//! Every independent consumer (a particle slot, a benchmark replication, an
//! oracle path batch) owns a ChaCha stream selected by a 64-bit stream id under
//! a shared master seed, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream id reserved for filter-level randomness (resampling).
pub const CONTROL_STREAM: u64 = u64::MAX;

pub fn stream(master_seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(id);
    rng
}

/// SplitMix64 finalizer, used to derive sub-seeds from integers.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
