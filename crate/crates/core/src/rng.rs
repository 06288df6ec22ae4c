//! Portable seeded random stream.
//!
//! All stochastic steps draw from [`Stream`], a ChaCha8 generator seeded with
//! `ChaCha8Rng::seed_from_u64`. The only primitive is [`Stream::uniform`]:
//! one 64-bit output shifted right by 11 and scaled by 2^-53, giving a value
//! in [0, 1) that any implementation of ChaCha8 can reproduce. Index draws
//! are `floor(u * n)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.inner.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform index in `0..n`. Consumes exactly one [`Stream::uniform`] draw.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index draw from an empty range");
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Stream::new(7);
        let mut b = Stream::new(7);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = Stream::new(1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn index_in_range() {
        let mut s = Stream::new(3);
        let mut seen = [false; 5];
        for _ in 0..1000 {
            seen[s.index(5)] = true;
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn different_seeds_differ() {
        assert_ne!(Stream::new(1).uniform(), Stream::new(2).uniform());
    }
}
