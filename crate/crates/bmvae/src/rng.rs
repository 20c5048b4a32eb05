//! Deterministic random streams.
//!
//! All stochastic code draws from ChaCha8 keyed by a 64-bit seed. Independent
//! consumers (sampler chains, weight init, minibatch shuffling, ...) select
//! disjoint streams with `set_stream`, so adding draws to one consumer never
//! shifts another. The generator is fully specified by (seed, stream,
//! position), which keeps every run reproducible from the seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Streams reserved by the training loop.
pub mod streams {
    pub const WEIGHT_INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const LATENT: u64 = 2;
    pub const NEGATIVE: u64 = 3;
}

/// RNG for stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
