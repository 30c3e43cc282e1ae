//! Deterministic counter-based random number generation.
//!
//! Every random quantity in this crate is a pure function of an explicit
//! [`RngSeed`].  The generator is stateless: the k-th 64-bit word of a stream
//! is produced directly from `(seed, stream_id, k)`, so any slice of a stream
//! can be generated independently and in parallel without shared state.
//!
//! The construction is fixed so that other implementations can reproduce the
//! exact sequences:
//!
//! 1. `mix64` is the SplitMix64 finalizer:
//!    `z ^= z >> 30; z *= 0xbf58476d1ce4e5b9; z ^= z >> 27;
//!     z *= 0x94d049bb133111eb; z ^= z >> 31` (wrapping arithmetic).
//! 2. A stream key is `key = mix64(seed ^ 0x9e3779b97f4a7c15)
//!    ^ mix64(stream_id ^ 0x6a09e667f3bcc909)`.
//! 3. Word k of the stream is `mix64(key ^ (k * 0x9e3779b97f4a7c15))`
//!    (wrapping multiply).
//! 4. A word maps to a uniform double in the open interval (0,1) as
//!    `((w >> 11) + 0.5) * 2^-53`.
//! 5. Standard normal samples come in Box-Muller pairs: pair p consumes
//!    words 2p and 2p+1 as uniforms (u1, u2) and yields
//!    `g[2p] = sqrt(-2 ln u1) * cos(2 pi u2)` and
//!    `g[2p+1] = sqrt(-2 ln u1) * sin(2 pi u2)`.
//! 6. Substream i of `(seed, stream_id)` is
//!    `(seed, mix64(stream_id ^ (i+1) * 0x9e3779b97f4a7c15))`.

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9e3779b97f4a7c15;
const STREAM_TAG: u64 = 0x6a09e667f3bcc909;

/// SplitMix64 finalizer; a bijection on u64.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Identifies one deterministic random stream.
///
/// Identical `(seed, stream_id)` pairs yield bit-identical sample sequences
/// on every run and platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derives a child stream.  Distinct indices give distinct streams for a
    /// fixed parent (the map is injective in `index`).
    pub fn substream(&self, index: u64) -> RngSeed {
        RngSeed {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ index.wrapping_add(1).wrapping_mul(GOLDEN)),
        }
    }

    #[inline]
    fn key(&self) -> u64 {
        mix64(self.seed ^ GOLDEN) ^ mix64(self.stream_id ^ STREAM_TAG)
    }

    /// Word `k` of this stream.
    #[inline]
    pub fn word(&self, k: u64) -> u64 {
        mix64(self.key() ^ k.wrapping_mul(GOLDEN))
    }
}

/// Sequential reader over one stream: uniforms, normals, and small integers.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: RngSeed) -> Self {
        Self {
            key: seed.key(),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let w = mix64(self.key ^ self.counter.wrapping_mul(GOLDEN));
        self.counter += 1;
        w
    }

    /// Uniform double in the open interval (0, 1).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        uniform_open01(self.next_u64())
    }

    /// One standard normal sample.  Consumes a full Box-Muller pair
    /// (two words) and discards the sine half, keeping the counter
    /// position independent of call parity.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        r * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `[0, bound)` by rejection from the top 32 bits.
    pub fn next_below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_below bound must be positive");
        let bound = bound as u64;
        // Rejection zone keeps the draw exactly uniform.
        let limit = u64::MAX - u64::MAX % bound;
        loop {
            let w = self.next_u64();
            if w < limit {
                return (w % bound) as usize;
            }
        }
    }

    /// `count` distinct indices drawn from `[0, n)` by partial Fisher-Yates.
    pub fn distinct_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot draw {count} distinct indices from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.next_below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

#[inline]
fn uniform_open01(w: u64) -> f64 {
    ((w >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `n` i.i.d. standard normal samples, a pure function of the seed.
///
/// Sample `j` is element `j` of the Box-Muller sequence described in the
/// module docs; the trailing sine half of the last pair is dropped when `n`
/// is odd.
pub fn gaussian_vector(seed: RngSeed, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("gaussian_vector requires n >= 1"));
    }
    let mut out = Vec::with_capacity(n);
    let pairs = n.div_ceil(2);
    for p in 0..pairs as u64 {
        let u1 = uniform_open01(seed.word(2 * p));
        let u2 = uniform_open01(seed.word(2 * p + 1));
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        out.push(r * phi.cos());
        if out.len() < n {
            out.push(r * phi.sin());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_vector_is_deterministic() {
        let seed = RngSeed::new(1, 0);
        let a = gaussian_vector(seed, 1000).unwrap();
        let b = gaussian_vector(seed, 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_vector_rejects_empty() {
        assert!(gaussian_vector(RngSeed::new(1, 0), 0).is_err());
    }

    #[test]
    fn gaussian_moments_at_scale() {
        // Law of large numbers windows: mean within +-0.004, variance
        // within [0.99, 1.01] at n = 1e6.
        let samples = gaussian_vector(RngSeed::new(1, 0), 1_000_000).unwrap();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() <= 0.004, "sample mean {mean} out of window");
        assert!((0.99..=1.01).contains(&var), "sample variance {var} out of window");
    }

    #[test]
    fn prefix_stability() {
        // A longer request starts with the same samples.
        let seed = RngSeed::new(7, 3);
        let short = gaussian_vector(seed, 10).unwrap();
        let long = gaussian_vector(seed, 100).unwrap();
        assert_eq!(&long[..10], &short[..]);
    }

    #[test]
    fn substreams_differ() {
        let base = RngSeed::new(42, 0);
        let a = gaussian_vector(base.substream(0), 8).unwrap();
        let b = gaussian_vector(base.substream(1), 8).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn counter_rng_matches_vector_path() {
        let seed = RngSeed::new(9, 4);
        let via_vec = gaussian_vector(seed, 6).unwrap();
        let mut rng = CounterRng::new(seed);
        // next_gaussian keeps only the cosine half of each pair, so it
        // matches elements 0, 2, 4 of the canonical sequence.
        assert_eq!(rng.next_gaussian(), via_vec[0]);
        assert_eq!(rng.next_gaussian(), via_vec[2]);
        assert_eq!(rng.next_gaussian(), via_vec[4]);
    }

    #[test]
    fn distinct_indices_are_distinct() {
        let mut rng = CounterRng::new(RngSeed::new(3, 1));
        let idx = rng.distinct_indices(20, 20);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }
}
