//! Named random streams.
//!
//! Each concern draws from its own ChaCha stream derived from the run seed,
//! so enabling or disabling one consumer never shifts another's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Exploration = 2,
    Replay = 3,
    WeightInit = 4,
    Admission = 5,
}

/// Generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Deterministic child seed for the `index`-th item of `stream`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut x = splitmix64(seed ^ splitmix64(stream as u64));
    x = splitmix64(x ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Environment generator for an explicit episode seed.
pub fn episode_rng(seed: u64) -> SimRng {
    stream_rng(seed, Stream::Environment)
}
