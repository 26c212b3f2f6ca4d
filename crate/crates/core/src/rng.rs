//! Counter-based random streams: one independent ChaCha stream per
//! replicate, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for replicate `replicate` of experiment arm `arm`.
pub fn stream_id(arm: u32, replicate: u32) -> u64 {
    (u64::from(arm) << 32) | u64::from(replicate)
}
