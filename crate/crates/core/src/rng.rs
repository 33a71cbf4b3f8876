//! Seedable SplitMix64 generator with keyed substreams.
//!
//! Every random draw in the crate goes through this type so that a corpus,
//! a clustering or a forest can be reproduced bit-for-bit from its seed in any
//! language. The exact stream definition:
//!
//! ```text
//! GAMMA = 0x9E37_79B9_7F4A_7C15
//! mix(z):  z = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9
//!          z = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB
//!          z ^ (z >> 31)
//! next():  state += GAMMA; mix(state)                  (wrapping arithmetic)
//! substream(seed, [k1, .., kn]):
//!          h = mix(seed); for each k: h = mix((h + GAMMA) ^ k); state = h
//! f64:     (next() >> 11) * 2^-53                     in [0, 1)
//! below(n): Lemire multiply-shift with rejection       in [0, n)
//! normal:  sqrt(-2 ln(1 - u1)) * cos(2 pi u2)          u1, u2 consecutive f64 draws
//! ```
//!
//! `ln`, `sqrt` and `cos` are the `libm` implementations, which are
//! bit-identical on every target.

use core::f64::consts::PI;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain tags used as the first substream key by each stage.
pub mod domain {
    pub const SYNTH_RECORD: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const SELECT_K: u64 = 3;
    pub const PROFILE_SAMPLE: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const FOREST_TREE: u64 = 6;
    pub const BOOSTING: u64 = 7;
    pub const COMMUNITY: u64 = 8;
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream keyed by `(seed, keys...)`.
    pub fn substream(seed: u64, keys: &[u64]) -> Self {
        Self {
            state: derive_seed(seed, keys),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    /// Uniform index in `[0, n)`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        match (hi - lo).checked_add(1) {
            Some(span) => lo + self.below(span),
            None => self.next_u64(),
        }
    }

    /// Standard normal draw (Box-Muller, cosine branch only).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
    }

    /// Partial Fisher-Yates: the first `count` entries of `items` become a
    /// uniform sample without replacement, in draw order.
    pub fn partial_shuffle<T>(&mut self, items: &mut [T], count: usize) {
        let n = items.len();
        for i in 0..count.min(n) {
            let j = i + self.index(n - i);
            items.swap(i, j);
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        self.partial_shuffle(items, n);
    }
}

/// Seed of the substream keyed by `keys` under `seed`.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(mix64(seed), |h, &k| mix64(h.wrapping_add(GAMMA) ^ k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of SplitMix64 seeded with 0.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let a: Vec<u64> = {
            let mut r = SplitMix64::substream(42, &[1, 7]);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SplitMix64::substream(42, &[1, 7]);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(derive_seed(42, &[1, 7]), derive_seed(42, &[7, 1]));
        assert_ne!(derive_seed(42, &[1, 7]), derive_seed(43, &[1, 7]));
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = SplitMix64::new(9);
        for n in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..200 {
                assert!(rng.below(n) < n);
            }
        }
    }

    #[test]
    fn unit_interval() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = SplitMix64::new(11);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn partial_shuffle_is_a_permutation() {
        let mut rng = SplitMix64::new(5);
        let mut v: Vec<usize> = (0..50).collect();
        rng.partial_shuffle(&mut v, 10);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
