use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A reproducible random stream keyed by `(base_seed, stream_index)`.
///
/// Backed by ChaCha8 with the stream index selecting an independent
/// keystream, so replication `m` draws the same numbers no matter which
/// worker runs it or in which order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub base_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        Self {
            base_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}
