//! Seeded randomness.
//!
//! Every sampling routine takes an explicit `&mut Stream`. Streams are ChaCha8
//! generators; replication `r` of an experiment with base seed `s` uses the
//! stream seeded with `s + r`, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::DenseVector;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replication_stream(base_seed: u64, replication: u64) -> Stream {
    stream(base_seed.wrapping_add(replication))
}

pub fn standard_normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vector(rng: &mut Stream, n: usize, std: f64) -> DenseVector {
    DenseVector::from_fn(n, |_, _| std * standard_normal(rng))
}

/// Index drawn from a discrete distribution given by non-negative weights summing to ~1.
pub fn categorical(rng: &mut Stream, probs: &[f64]) -> usize {
    let u: f64 = rng.r#gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum; fall back to the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
