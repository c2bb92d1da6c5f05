//! Counter-based seeding: every work item gets its own ChaCha stream derived
//! from the master seed, so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream namespaces, kept apart so that e.g. training batches never reuse evaluation draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Evaluation = 1,
    TrainBatch = 2,
    HeldOut = 3,
    Simulation = 4,
    Verification = 5,
}

/// Generator for work item `index` in `domain` under `seed`.
pub fn stream_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) ^ index);
    rng
}
