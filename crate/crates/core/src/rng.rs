//! Seed streams.
//!
//! All randomness flows from one master seed. A [`SeedStream`] names a node
//! in a tree of streams; children and generators are derived by hashing
//! `(seed, label, index)`, so a replication's draws never depend on which
//! thread ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for task `label`, replication `index`.
    pub fn child(&self, label: &str, index: u64) -> SeedStream {
        SeedStream {
            seed: derive(self.seed, label, index),
        }
    }

    /// Generator for task `label`, replication `index`.
    pub fn rng(&self, label: &str, index: u64) -> StreamRng {
        ChaCha8Rng::seed_from_u64(derive(self.seed, label, index))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive(seed: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label, then mixed with the seed and index.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(seed ^ h).wrapping_add(splitmix64(index.wrapping_add(0x5851_f42d))))
}
