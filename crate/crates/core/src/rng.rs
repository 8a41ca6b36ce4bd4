//! Deterministic RNG stream derivation.
//!
//! Every replication owns its generators, derived from
//! `(master seed, replication index, stream id)` via ChaCha streams, so
//! replications are independent, the per-stream drivers inside one
//! replication are independent, and sharing a master seed across strategy
//! or scale comparisons yields common random numbers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream ids 0..STREAMS_PER_REPLICATION are reserved per replication.
pub const STREAMS_PER_REPLICATION: u64 = 1024;

/// Generator for `(master, replication, stream)`.
pub fn stream_rng(master: u64, replication: u64, stream: u64) -> ChaCha12Rng {
    assert!(stream < STREAMS_PER_REPLICATION, "stream id out of range");
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(
        replication
            .wrapping_mul(STREAMS_PER_REPLICATION)
            .wrapping_add(stream),
    );
    rng
}

/// Stream id of the event driver for one point-process stream.
pub fn event_stream_id(flat_stream_index: usize) -> u64 {
    flat_stream_index as u64
}

/// Stream id reserved for the Brownian driver of the limit simulator.
pub const LIMIT_NOISE_STREAM: u64 = 512;
