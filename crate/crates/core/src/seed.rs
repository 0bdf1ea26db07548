//! Seed derivation and the counter-based generator used everywhere.
//!
//! Every random stream is a ChaCha8 keystream addressed by `(seed, stream)`,
//! so the outcome of trial `i` never depends on how many trials ran before
//! it or on which thread ran it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stable sub-seed for `(seed, component, index)`.
pub fn derive_seed(seed: u64, component: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((component.len() as u64).to_le_bytes());
    h.update(component.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in [0, 1) with 53 bits of precision.
#[inline]
pub fn unit(rng: &mut StreamRng) -> f64 {
    rng.gen::<f64>()
}

#[inline]
pub fn bernoulli(rng: &mut StreamRng, p: f64) -> bool {
    if p >= 1.0 {
        // still consume a draw so the stream position does not depend on p
        let _ = unit(rng);
        true
    } else {
        unit(rng) < p
    }
}

/// Index drawn proportionally to `weights` by cumulative inversion.
///
/// Zero-weight entries are never returned. Panics if every weight is zero.
pub fn pick_weighted(rng: &mut StreamRng, weights: &[f64], total: f64) -> usize {
    let target = unit(rng) * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if target < acc {
            return i;
        }
    }
    // rounding can leave target == total; fall back to the last positive entry
    last.expect("pick_weighted needs a positive weight")
}
