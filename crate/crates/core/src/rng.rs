//! Seed derivation. Every random draw in the pipeline comes from a ChaCha
//! stream keyed by `(seed ^ id, purpose)`, so per-user work can run in any
//! order or on any thread and still produce identical bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as Rng;

/// Independent stream identifiers for the different consumers of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 1,
    Sub6Noise = 2,
    MmwaveNoise = 3,
    Augment = 4,
    Split = 5,
    Init = 6,
    Shuffle = 7,
    Dropout = 8,
}

/// Generator for one `(seed, id)` pair on the given stream.
pub fn derive(seed: u64, id: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id);
    rng.set_stream(stream as u64);
    rng
}
