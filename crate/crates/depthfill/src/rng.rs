//! Seed derivation helpers.
//!
//! All randomness in the crate flows through `ChaCha8Rng` seeded from a
//! `u64`, so every run is reproducible from the seeds written into run
//! manifests. `derive_seed` splits one master seed into independent streams
//! keyed by a purpose string, which keeps e.g. scene generation and sparsity
//! sampling decorrelated without threading RNG state around.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the purpose string, folded into the base seed.
pub fn derive_seed(base: u64, purpose: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in purpose.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    // splitmix-style finalizer so nearby base seeds diverge
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A deterministic RNG for the given seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
