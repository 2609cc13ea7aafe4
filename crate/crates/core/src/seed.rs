//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed from a
//! master seed plus a stream tag. Deriving child seeds with a mixing function
//! keeps sibling streams (rounds, tasks, graders) independent of each other
//! and of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child stream `stream` from `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Derives a seed from a path of stream tags, e.g. `[round, task]`.
pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &tag| derive_seed(acc, tag))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// The streams consumed by one round of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundSeeds {
    pub scenario: u64,
    pub grading: u64,
    /// Choice of misreporting devices.
    pub inflation: u64,
}

impl RoundSeeds {
    /// Seeds for round `round` (0-based) of a run keyed by `master`.
    pub fn new(master: u64, round: u64) -> Self {
        Self::from_round_seed(derive_seed(master, round))
    }

    pub fn from_round_seed(round_seed: u64) -> Self {
        Self {
            scenario: derive_seed(round_seed, 0),
            grading: derive_seed(round_seed, 1),
            inflation: derive_seed(round_seed, 2),
        }
    }
}
