//! Seed derivation and deterministic sampling helpers.
//!
//! All randomness in the crate flows from user-visible seeds through the
//! functions here. Hashing is splitmix64-based rather than `DefaultHasher`
//! so that derived streams are stable across Rust releases and platforms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, trivially stable.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a byte string into an existing state.
#[inline]
pub fn hash_bytes(mut state: u64, bytes: &[u8]) -> u64 {
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        state = mix64(state ^ u64::from_le_bytes(word));
    }
    mix64(state ^ bytes.len() as u64)
}

/// Derive a child seed from a parent seed, a purpose label and an index.
/// Order-independent: depends only on the arguments, never on call order.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    mix64(hash_bytes(mix64(seed), label.as_bytes()) ^ mix64(index))
}

/// Derive a child seed keyed by a string id (e.g. an utterance id).
pub fn derive_seed_str(seed: u64, label: &str, id: &str) -> u64 {
    hash_bytes(hash_bytes(mix64(seed), label.as_bytes()), id.as_bytes())
}

/// Deterministic RNG for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_mut(8) {
        s = mix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Standard normal sample via Box-Muller.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Avoid ln(0); gen::<f64>() is in [0, 1).
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Normal(0, sigma) truncated to two standard deviations.
pub fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    loop {
        let x = gaussian(rng);
        if x.abs() <= 2.0 {
            return x * sigma;
        }
    }
}
