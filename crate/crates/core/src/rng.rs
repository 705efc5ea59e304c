//! Seed derivation and named random streams.
//!
//! Every random object is drawn from a ChaCha8 stream keyed by
//! `sha256(seed || label)`, so independent objects (matrix, gains, signals)
//! never share state and can be generated in any order or on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

fn digest(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Stream for the object named `label` under `seed`.
pub fn substream(seed: u64, label: &str) -> Stream {
    ChaCha8Rng::from_seed(digest(seed, &[label.as_bytes()]))
}

/// Derive a child seed from a parent seed and an ordered list of byte parts.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let d = digest(seed, parts);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
