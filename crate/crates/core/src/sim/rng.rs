//! Seeded random streams.
//!
//! Every run draws from `ChaCha8Rng::seed_from_u64(seed)` with a stream id of
//! `4 · replication + purpose`, so arrivals, routing and service times never
//! share a stream and replications never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Arrival = 0,
    Routing = 1,
    Service = 2,
    Misc = 3,
}

pub fn stream(seed: u64, replication: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication * 4 + purpose as u64);
    rng
}
