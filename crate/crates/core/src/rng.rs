//! Per-path random streams.
//!
//! Every path owns independent ChaCha8 streams keyed by `(seed, path_index,
//! purpose)`. ChaCha is counter based, so a stream is a pure function of its
//! key and paths can be generated in any order or on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Each purpose gets its own stream so that, for
/// example, toggling the bridge correction never shifts the Brownian
/// increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Increments = 0,
    MinimumBridge = 1,
    MaximumBridge = 2,
}

const PURPOSES: u64 = 4;

pub fn path_stream(seed: u64, path_index: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}
