//! Seeded, stream-splittable random source.
//!
//! Algorithm: ChaCha12 keyed by the 64-bit seed (expanded to a 256-bit key
//! with four SplitMix64 outputs), with the 64-bit stream id as the ChaCha
//! nonce. Each `(seed, stream)` pair is an independent keystream; the word
//! position is the counter. Derived sub-streams hash `(stream, label)` with
//! the SplitMix64 finalizer.
//!
//! Normals use the Box–Muller transform (cosine branch only, two uniforms
//! per draw, no cached spare). Exponentials use the inverse CDF.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_label(stream: u64, label: u64) -> u64 {
    let mut s = stream ^ label.rotate_left(32) ^ 0xD134_2543_DE82_EF95;
    splitmix64(&mut s) ^ label
}

#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    inner: ChaCha12Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut inner = ChaCha12Rng::from_seed(key);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Words consumed so far on this stream.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Fresh source on a sub-stream; does not advance `self`.
    pub fn derive(&self, label: u64) -> Self {
        Self::new(self.seed, mix_label(self.stream, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, a: f64, b: f64) -> Result<f64> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("uniform requires a < b, got [{a}, {b})")));
        }
        let v = a + (b - a) * self.next_f64();
        // Rounding can land on b for wide intervals.
        Ok(if v < b { v } else { a })
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    /// Exponential with mean `scale`.
    pub fn exponential(&mut self, scale: f64) -> Result<f64> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("exponential scale must be > 0, got {scale}")));
        }
        Ok(-scale * (1.0 - self.next_f64()).ln())
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn integer_range(&mut self, lo: usize, hi: usize) -> Result<usize> {
        if lo > hi {
            return Err(Error::Domain(format!("integer range [{lo}, {hi}] is empty")));
        }
        let span = (hi - lo) as u64 + 1;
        if span == 0 {
            return Ok(lo + self.next_u64() as usize);
        }
        // Rejection removes modulo bias.
        let zone = u64::MAX - (u64::MAX % span);
        loop {
            let v = self.next_u64();
            if v < zone {
                return Ok(lo + (v % span) as usize);
            }
        }
    }

    /// `k` distinct indices from `0..n` in ascending order (partial Fisher–Yates).
    pub fn subset(&mut self, k: usize, n: usize) -> Result<Vec<usize>> {
        if k > n {
            return Err(Error::Domain(format!("cannot draw {k} of {n}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = self.integer_range(i, n - 1)?;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx.sort_unstable();
        Ok(idx)
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.integer_range(0, i).expect("non-empty range");
            idx.swap(i, j);
        }
        idx
    }
}
