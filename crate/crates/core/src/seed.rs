//! Stable seed derivation.
//!
//! Every random stage derives its own RNG from a base seed and a list of
//! labels (item id, version index, stage name, ...). Derivation goes through
//! SHA-256 so the mapping is stable across platforms and toolchains, and
//! parallel execution order never influences results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a derivation path.
#[derive(Debug, Clone, Copy)]
pub enum Part<'a> {
    Str(&'a str),
    U64(u64),
}

impl<'a> From<&'a str> for Part<'a> {
    fn from(s: &'a str) -> Self {
        Part::Str(s)
    }
}

impl<'a> From<&'a String> for Part<'a> {
    fn from(s: &'a String) -> Self {
        Part::Str(s.as_str())
    }
}

impl From<u64> for Part<'_> {
    fn from(v: u64) -> Self {
        Part::U64(v)
    }
}

impl From<usize> for Part<'_> {
    fn from(v: usize) -> Self {
        Part::U64(v as u64)
    }
}

/// Derives a child seed from `base` and a path of parts.
pub fn derive(base: u64, parts: &[Part<'_>]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        // Tag + length prefix keeps ("ab", "c") distinct from ("a", "bc").
        match part {
            Part::Str(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            Part::U64(v) => {
                hasher.update([1u8]);
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seed for the `index`-th of several independent draws from `base`.
pub fn mix(base: u64, index: u64) -> u64 {
    derive(base, &[Part::Str("mix"), Part::U64(index)])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, parts: &[Part<'_>]) -> ChaCha8Rng {
    rng(derive(base, parts))
}
