//! Deterministic sub-stream derivation.
//!
//! All randomness flows from a single run seed. Every randomized stage keys
//! its own stream by hashing the seed together with a stage label and task
//! indices, so results never depend on scheduling or execution order.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// FNV-1a over the seed, a stage label, and task indices.
pub fn derive_seed(base: u64, label: &str, parts: &[u64]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(PRIME);
    };
    for b in base.to_le_bytes() {
        eat(b);
    }
    for b in label.as_bytes() {
        eat(*b);
    }
    for part in parts {
        for b in part.to_le_bytes() {
            eat(b);
        }
    }
    h
}

pub fn rng_for(base: u64, label: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label, parts))
}

/// Standard normal draw via Box-Muller; two uniform draws per call keeps the
/// stream layout independent of any sampler implementation details.
pub fn sample_standard_normal(rng: &mut impl rand::Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// FNV-1a fingerprint of a byte stream, hex-encoded; used for provenance.
pub fn fingerprint(bytes: impl IntoIterator<Item = u8>) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    format!("{h:016x}")
}
