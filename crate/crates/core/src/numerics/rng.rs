//! Counter-based random streams for reproducible, parallel-safe sampling.
//!
//! Every slot, experiment arm and training run owns its own stream. A
//! stream is identified by `(seed, stream_id)` and replays the identical
//! sequence on every run; distinct stream ids are statistically
//! independent, so work can be farmed out across threads without any
//! coordination as long as each task owns exactly one stream.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::numerics::C64;

const TWO_PI: f64 = core::f64::consts::TAU;

/// SplitMix64 finalizer, used to derive child stream ids.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A splittable, replayable random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Open the stream `(seed, stream_id)` at its start.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    /// Derive an independent child stream. Children with distinct
    /// `child_id`s (and their further descendants) never collide in
    /// practice: ids are separated by a 64-bit mix.
    pub fn split(&self, child_id: u64) -> Self {
        let id = mix64(self.stream_id ^ mix64(child_id ^ 0x5851_f42d_4c95_7f2d));
        RngStream::new(self.seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Rejection sampling on the top bits keeps the draw unbiased.
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// One random bit.
    pub fn bit(&mut self) -> u8 {
        (self.next_u64() >> 63) as u8
    }

    /// A pair of independent standard normal samples (Box-Muller).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TWO_PI * u2).sin_cos();
        (r * c, r * s)
    }

    /// Circularly-symmetric complex Gaussian sample with `E[|z|^2] = variance`.
    pub fn cgauss_one(&mut self, variance: f64) -> C64 {
        let (re, im) = self.normal_pair();
        let s = (variance * 0.5).sqrt();
        C64::new(s * re, s * im)
    }
}

/// i.i.d. circularly-symmetric complex Gaussian tensor of `n` entries with
/// per-entry power `variance`. Real and imaginary parts are independent,
/// each with variance `variance / 2`.
pub fn cgauss(n: usize, variance: f64, rng: &mut RngStream) -> Result<Vec<C64>> {
    if !(variance >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "cgauss variance must be >= 0, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(alloc::vec![C64::new(0.0, 0.0); n]);
    }
    Ok((0..n).map(|_| rng.cgauss_one(variance)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_replays() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let va = cgauss(256, 1.0, &mut a).unwrap();
        let vb = cgauss(256, 1.0, &mut b).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn zero_variance_is_all_zero() {
        let mut rng = RngStream::new(1, 0);
        let v = cgauss(100, 0.0, &mut rng).unwrap();
        assert!(v.iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn negative_variance_rejected() {
        let mut rng = RngStream::new(1, 0);
        assert!(cgauss(4, -1.0, &mut rng).is_err());
    }

    #[test]
    fn second_moment_matches_variance() {
        let mut rng = RngStream::new(42, 9);
        let n = 1_000_000;
        let v = cgauss(n, 1.0, &mut rng).unwrap();
        let mean_p = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((0.99..=1.01).contains(&mean_p), "mean |z|^2 = {mean_p}");
    }

    #[test]
    fn real_imag_uncorrelated() {
        let mut rng = RngStream::new(3, 5);
        let n = 1_000_000;
        let v = cgauss(n, 1.0, &mut rng).unwrap();
        let cov = v.iter().map(|z| z.re * z.im).sum::<f64>() / n as f64;
        assert!(cov.abs() < 0.01, "re/im covariance = {cov}");
    }

    #[test]
    fn below_is_in_range_and_deterministic() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
        }
        let mut a = RngStream::new(11, 1);
        let mut b = RngStream::new(11, 1);
        let xs: Vec<u64> = (0..64).map(|_| a.below(13)).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.below(13)).collect();
        assert_eq!(xs, ys);
    }
}
