//! Deterministic counter-based randomness.
//!
//! Every random draw in the pipeline derives from a 64-bit key built by
//! hashing `(seed, stream label, counter)` through the SplitMix64 output
//! permutation. Because a draw depends only on its key and never on how
//! many draws other code made before it, output is identical regardless
//! of row order or parallel schedule.

use alloc::vec::Vec;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output mix (Steele, Lea & Flood 2014).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string, used to fold stream labels into the key.
#[inline]
pub fn hash_label(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A named substream of the top-level seed.
///
/// `CounterRng::new(seed, b"goss")` and `CounterRng::new(seed, b"synthgen")`
/// are independent; two instances with the same `(seed, label)` produce the
/// same sequence.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, label: &[u8]) -> Self {
        CounterRng {
            key: mix64(seed ^ hash_label(label)),
            counter: 0,
        }
    }

    /// Substream keyed by an extra integer (participant index, tree index...).
    pub fn substream(&self, index: u64) -> Self {
        CounterRng {
            key: mix64(self.key ^ mix64(index.wrapping_mul(GOLDEN_GAMMA))),
            counter: 0,
        }
    }

    /// Substream keyed by a byte label (column name, purpose tag).
    pub fn labeled(&self, label: &[u8]) -> Self {
        CounterRng {
            key: mix64(self.key ^ hash_label(label)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter += 1;
        out
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n) by Lemire multiply-shift reduction.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            slice.swap(i, j);
        }
    }

    /// Sample `k` distinct indices from `0..n` (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
