//! Deterministic random-number plumbing.
//!
//! Every stochastic routine in the crate draws from ChaCha8, a counter-based
//! generator that is seedable and cheaply splittable into 2^64 independent
//! streams. A simulation object is always reproduced exactly by its
//! `(master seed, stream id)` pair, independent of thread count or platform,
//! and the word counter gives random access within a stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The concrete generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Identifies one independent random stream of a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeed {
    /// Seed shared by the whole experiment.
    pub master: u64,
    /// Stream index; distinct indices give independent streams.
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        StreamSeed { master, stream }
    }

    /// Instantiates the generator positioned at the start of the stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for StreamSeed {
    /// A bare master seed means stream 0.
    fn from(master: u64) -> Self {
        StreamSeed::new(master, 0)
    }
}

/// Stream-id layout used by replicated experiments: replication `r` owns the
/// block `[r * STREAM_BLOCK, (r + 1) * STREAM_BLOCK)` and purposes index into
/// the block, so replications and purposes never collide.
pub const STREAM_BLOCK: u64 = 64;

/// Stream id for purpose `purpose` inside replication `replication`.
pub fn replication_stream(replication: u64, purpose: u64) -> u64 {
    debug_assert!(purpose < STREAM_BLOCK);
    replication * STREAM_BLOCK + purpose
}

/// Draws a standard exponential via inversion, consuming exactly one `u64` of
/// the stream. Fixed consumption keeps per-slot random access possible.
pub fn exp_inverse(rng: &mut StreamRng, mean: f64) -> f64 {
    let u: f64 = rng.gen();
    // 1 - u is in (0, 1]; ln of it is finite and nonpositive.
    -mean * (1.0 - u).ln()
}
