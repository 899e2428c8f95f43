//! Deterministic random streams.
//!
//! Every stream is a ChaCha20 keystream keyed by the master seed. The 64-bit
//! ChaCha stream id packs the replication index (upper 56 bits) and a purpose
//! tag (lower 8 bits), so each `(seed, replication, purpose)` triple owns a
//! disjoint keystream and draws for one purpose never shift another's.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Identifier recorded in every report so a run can be replayed.
pub const RNG_ALGORITHM: &str =
    "chacha20 (rand_chacha 0.9); key=seed_from_u64(master_seed), stream=(replication<<8)|purpose";

/// Largest replication index that fits in the stream id.
pub const MAX_REPLICATION: u64 = (1 << 56) - 1;

pub type Stream = ChaCha20Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Purpose {
    Arrivals = 1,
    Routing = 2,
    Carriers = 3,
    Detection = 4,
    Service = 5,
    Alarms = 6,
    Scheme = 7,
    Attack = 8,
    Playbook = 9,
    Coverage = 10,
    Guesser = 11,
    TieBreak = 12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngContract {
    pub master_seed: u64,
}

impl RngContract {
    pub fn new(master_seed: u64) -> Self {
        RngContract { master_seed }
    }

    /// The stream for `(master_seed, replication, purpose)`.
    ///
    /// Panics if `replication` exceeds [`MAX_REPLICATION`].
    pub fn stream(&self, replication: u64, purpose: Purpose) -> Stream {
        assert!(replication <= MAX_REPLICATION, "replication index {replication} too large");
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream((replication << 8) | purpose as u64);
        rng
    }
}
