//! Deterministic random streams.
//!
//! One 64-bit seed drives ChaCha8 generators on separate stream ids, so that
//! consumers of one stream never shift the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes that draw randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Parameter initialisation.
    Init = 0,
    /// Training batch sampling.
    Batch = 1,
    /// Negative sample times and positive subsampling.
    Sampling = 2,
    /// Synthetic data generation.
    Synth = 3,
}

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
