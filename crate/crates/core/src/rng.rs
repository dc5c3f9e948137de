//! Deterministic, splittable random streams.
//!
//! Every stream is a xoshiro256** generator (Blackman & Vigna) whose 256-bit
//! state is expanded with SplitMix64 from a `(seed, stream_id)` pair. Stream
//! ids are derived from a purpose label and an index with FNV-1a followed by
//! the SplitMix64 finalizer, so unrelated consumers never share state.
//!
//! Sampling routines are written out here rather than taken from a
//! distribution library so that the mapping from raw `u64` draws to values is
//! pinned: the same `(seed, stream_id)` yields the same floats on every
//! platform and every dependency version.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Stream id for `(label, index)`. Not reversible; collisions are 2^-64 events.
pub fn stream_id(label: &str, index: u64) -> u64 {
    mix64(fnv1a(label.as_bytes()) ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// A seeded random stream.
///
/// Cloning a stream copies its position; the clone and the original then
/// produce identical sequences independently.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: Xoshiro256StarStar,
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.stream_id == other.stream_id && self.inner == other.inner
    }
}

/// Derives the stream for `(purpose_label, index)` under `seed`.
pub fn derive_stream(seed: u64, purpose_label: &str, index: u64) -> RngStream {
    RngStream::from_parts(seed, stream_id(purpose_label, index))
}

impl RngStream {
    pub fn from_parts(seed: u64, stream_id: u64) -> Self {
        let key = mix64(seed) ^ mix64(stream_id ^ GOLDEN_GAMMA).rotate_left(17);
        Self {
            seed,
            stream_id,
            inner: Xoshiro256StarStar::seed_from_u64(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream keyed by this stream's identity and `label`, not by its
    /// current position. Forking before or after drawing gives the same child.
    pub fn fork(&self, label: &str) -> RngStream {
        self.fork_indexed(label, 0)
    }

    pub fn fork_indexed(&self, label: &str, index: u64) -> RngStream {
        RngStream::from_parts(self.seed, mix64(self.stream_id) ^ stream_id(label, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe as a logarithm argument.
    #[inline]
    fn uniform_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` by Lemire's multiply-and-reject method.
    ///
    /// Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) has no valid outcome");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// Standard normal via Box-Muller. Always consumes exactly two draws and
    /// discards the sine branch, so the draw count never depends on values.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(stream: &mut RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| stream.next_u64()).collect()
    }

    #[test]
    fn same_inputs_same_stream() {
        let mut a = derive_stream(42, "env-gen", 0);
        let mut b = derive_stream(42, "env-gen", 0);
        assert_eq!(draws(&mut a, 256), draws(&mut b, 256));
    }

    #[test]
    fn labels_separate_streams() {
        let a = draws(&mut derive_stream(42, "env-gen", 0), 64);
        let b = draws(&mut derive_stream(42, "noise", 0), 64);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn indices_separate_streams() {
        let a = derive_stream(42, "run", 7).next_u64();
        let b = derive_stream(42, "run", 8).next_u64();
        assert_ne!(a, b);
    }

    #[test]
    fn no_first_draw_collisions_over_many_ids() {
        let mut seen = std::collections::HashSet::new();
        for label in ["env-gen", "noise", "run", "agent", "eval"] {
            for idx in 0..2_000 {
                assert!(seen.insert(derive_stream(42, label, idx).next_u64()));
            }
        }
    }

    #[test]
    fn golden_first_draws() {
        // Pins the whole derivation chain; any change here breaks every
        // committed trajectory.
        // Values from an independent Python transcription of the published
        // SplitMix64 / xoshiro256** reference code.
        let got = draws(&mut derive_stream(0, "golden", 0), 3);
        assert_eq!(got, vec![0x83c7_20a7_62aa_49b4, 0xcbd1_9e63_ccc6_769f, 0xd45c_1d06_d016_19ee]);
        assert_eq!(mix64(0), 0);
        assert_eq!(mix64(1), 0x5692_161d_100b_05e5);
    }

    #[test]
    fn fork_ignores_position() {
        let mut s = derive_stream(9, "run", 1);
        let before = s.fork("child");
        s.next_u64();
        assert_eq!(before, s.fork("child"));
        assert_ne!(s.fork("child").stream_id(), s.fork("other").stream_id());
    }

    #[test]
    fn below_stays_in_range_and_hits_all() {
        let mut s = derive_stream(1, "below", 0);
        let mut hits = [0usize; 7];
        for _ in 0..7_000 {
            hits[s.index(7)] += 1;
        }
        assert!(hits.iter().all(|&h| h > 800 && h < 1_200), "{hits:?}");
    }

    #[test]
    fn normal_moments() {
        let mut s = derive_stream(3, "gauss", 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn uniform_moments() {
        let mut s = derive_stream(3, "unif", 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.uniform()).collect();
        assert!(xs.iter().all(|x| (0.0..1.0).contains(x)));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var - 1.0 / 12.0).abs() < 0.005);
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut s = derive_stream(5, "shuffle", 0);
        let mut v: Vec<u32> = (0..50).collect();
        s.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
