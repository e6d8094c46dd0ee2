//! Seeded, splittable random streams.
//!
//! A stream is a ChaCha8 keystream keyed by the base seed and selected by a
//! stream id. Each item `k` in a stream owns the block range starting at
//! word `k << 32`, so item `k` draws the same numbers no matter which
//! worker generates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Demand scenarios for the regressor dataset.
pub const STREAM_DATASET1: u64 = 1;
/// Demand scenarios for the classifier dataset.
pub const STREAM_DATASET2: u64 = 2;
/// Demand scenarios for testing.
pub const STREAM_TEST: u64 = 3;
/// Learner weight initialization; the model id is the item index.
pub const STREAM_INIT: u64 = 16;
/// Learner mini-batch shuffling; the model id is the item index.
pub const STREAM_SHUFFLE: u64 = 17;

pub fn substream(seed: u64, stream: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(item) << 32);
    rng
}
