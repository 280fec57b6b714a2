//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream. A
//! stream is identified by a `(seed, stream)` pair: ChaCha keys on the seed
//! and uses the 64-bit stream id as its nonce, so distinct stream ids give
//! independent sequences for the same seed. Parallel trials derive their
//! own seed from the experiment seed and the trial index with
//! [`derive_seed`], which makes results independent of scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for a trajectory-level seed (stream 0).
pub fn rng_for(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for the `index`-th unit of work (trial, block, batch).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // stream 0 is reserved for the parent itself
    stream(seed, index.wrapping_add(1)).next_u64()
}
