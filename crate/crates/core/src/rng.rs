//! Seeded random streams.
//!
//! A run has one seed. Each consumer (initialization, dropout, batching,
//! permutation, data generation) draws from its own ChaCha stream so that
//! changing how often one component draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Batching = 3,
    Permutation = 4,
    Stations = 5,
    TrainData = 6,
    TestData = 7,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
