//! Deterministic derivation of per-task RNG seeds from a master seed.
//!
//! Folds, trees, and subjects each get an independent stream so that work
//! can be reordered or parallelized without changing results.

/// SplitMix64 finalizer. Good avalanche behavior, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a stream index.
pub fn derive(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Derives a child seed from `master` and two stream indices.
pub fn derive2(master: u64, a: u64, b: u64) -> u64 {
    derive(derive(master, a), b)
}
