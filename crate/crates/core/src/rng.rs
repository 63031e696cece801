//! Seed derivation for reproducible experiments.
//!
//! A [`SeedStream`] is a 64-bit key. Named sub-streams are ChaCha20 generators
//! keyed by the seed and selected by a hash of the name through ChaCha's
//! 64-bit stream id, so draws in one sub-stream never shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedStream(u64);

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    /// Independent child seed for replicate `index`.
    pub fn child(self, index: u64) -> Self {
        Self(mix64(
            self.0 ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)),
        ))
    }

    /// Generator for the sub-stream called `label`.
    pub fn rng(self, label: &str) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&mix64(self.0.wrapping_add(i as u64)).to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(label_hash(label));
        rng
    }
}
