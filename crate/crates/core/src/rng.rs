//! Per-replica random streams.
//!
//! Replica `r` of an experiment with seed `s` draws from ChaCha8 keyed by `s`
//! on stream `r`. Streams are disjoint, so results do not depend on how
//! replicas are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

pub fn replica_rng(seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Stream for sub-task `tag` of replica `replica`, disjoint from [`replica_rng`]
/// streams as long as `tag > 0`.
pub fn tagged_rng(seed: u64, tag: u32, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(tag) << 48) ^ replica);
    rng
}
