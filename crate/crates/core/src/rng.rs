//! Seeded randomness.
//!
//! All randomness in the crate comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64` and split into independent streams with `set_stream`. The
//! conversions below are implemented here on top of raw `next_u64` output so
//! that sampled values do not depend on `rand` distribution internals.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type StackRng = ChaCha8Rng;

/// Stream used for control-mask draws in the explainer.
pub const CONTROL_STREAM: u64 = 0;
/// Stream used to initialize the decision engine during pool training.
pub const ENGINE_STREAM: u64 = 1;

/// Stream for pool member `model_index`.
pub const fn model_stream(model_index: usize) -> u64 {
    2 + model_index as u64
}

pub fn seeded(seed: u64, stream: u64) -> StackRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut StackRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[lo, hi)`.
pub fn uniform(rng: &mut StackRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}

/// Unbiased uniform index in `0..n` (rejection sampling). `n` must be non-zero.
pub fn index_below(rng: &mut StackRng, n: usize) -> usize {
    assert!(n > 0, "index_below called with n = 0");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Draws `count` distinct positions from `0..n` by a partial Fisher-Yates
/// shuffle. Positions are returned in draw order.
pub fn sample_distinct(rng: &mut StackRng, n: usize, count: usize) -> Vec<usize> {
    assert!(count <= n, "cannot draw {count} distinct items from {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + index_below(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: Vec<u64> = {
            let mut r = seeded(7, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = seeded(7, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = seeded(7, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut r = seeded(1, 0);
        for _ in 0..10_000 {
            let v = uniform(&mut r, -0.5, 0.5);
            assert!((-0.5..0.5).contains(&v));
        }
    }

    #[test]
    fn sample_distinct_has_no_repeats() {
        let mut r = seeded(3, 0);
        for n in 1..12 {
            for count in 0..=n {
                let mut s = sample_distinct(&mut r, n, count);
                assert_eq!(s.len(), count);
                s.sort();
                s.dedup();
                assert_eq!(s.len(), count);
                assert!(s.iter().all(|&i| i < n));
            }
        }
    }
}
