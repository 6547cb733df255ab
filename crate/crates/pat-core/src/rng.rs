//! Seeded random number generation.
//!
//! Every randomized procedure in the toolkit takes an explicit 64-bit seed
//! and draws from ChaCha8, so datasets regenerate bit-identically across
//! platforms and runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one generator used throughout the toolkit.
pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for subtask `index` of a parent seed.
/// Distinct (seed, index) pairs give distinct, uncorrelated streams.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
