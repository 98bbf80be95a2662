//! Seed derivation. Every randomized step draws from a ChaCha8 stream whose
//! seed is a digest of the base seed plus a context path, so results are
//! stable across platforms and independent of call order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `base` and a context path.
pub fn derive(base: u64, path: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in path {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// RNG seeded from `derive(base, path)`.
pub fn rng_for(base: u64, path: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_context_sensitive() {
        let a = derive(42, &["split", "ccnx", "0"]);
        let b = derive(42, &["split", "ccnx", "0"]);
        let c = derive(42, &["split", "ccnx", "1"]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, derive(43, &["split", "ccnx", "0"]));
    }

    #[test]
    fn rng_streams_are_reproducible() {
        let xs: Vec<u32> = rng_for(7, &["t"]).sample_iter(rand::distributions::Standard).take(4).collect();
        let ys: Vec<u32> = rng_for(7, &["t"]).sample_iter(rand::distributions::Standard).take(4).collect();
        assert_eq!(xs, ys);
    }
}
