//! Counter-addressed random streams.
//!
//! A 256-bit ChaCha key is derived from a master seed and a list of labels
//! (sweep cell, replication, ...). Within a key, stream `i` belongs to particle
//! `i`, and the word position encodes `(step, phase)`. Every draw a particle
//! makes therefore depends only on `(seed, labels, particle, step, phase)`,
//! never on scheduling, so runs are bit-identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Init = 0,
    Selection = 1,
    Mutation = 2,
    Aux = 3,
}

const PHASES: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed and labels into a 64-bit seed for a sub-experiment.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(master), |acc, &l| splitmix64(acc ^ splitmix64(l.wrapping_add(0xA076_1D64_78BD_642F))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Self { key }
    }

    pub fn from_labels(master: u64, labels: &[u64]) -> Self {
        Self::new(derive_seed(master, labels))
    }

    /// The generator for `particle` at mesh step `step` in `phase`. Each
    /// `(step, phase)` window holds 2³² words.
    pub fn stream(&self, particle: u64, step: u64, phase: Phase) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(particle);
        rng.set_word_pos(((step * PHASES + phase as u64) as u128) << 32);
        rng
    }
}
