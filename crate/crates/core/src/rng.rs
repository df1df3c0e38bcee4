//! Deterministic, counter-based randomness keyed by `(seed, stream)`.
//!
//! Every consumer (client data, bucketing shuffle, power iteration start
//! vectors, masks, ...) draws from its own stream so any component can be
//! replayed in isolation. The ChaCha block function is a pure function of
//! (key, stream, counter), so byte streams agree on all platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

/// What a stream is used for. Packed into the top byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamKind {
    TaskInit = 1,
    ClientData = 2,
    MaliciousSet = 3,
    Bucketing = 4,
    Estimator = 5,
    Masks = 6,
    AttackData = 7,
    Rounding = 8,
    Misc = 0xff,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream id for `kind` at `round` for participant `index`.
    ///
    /// Layout: 8 bits kind | 28 bits round | 28 bits index.
    pub fn derive(seed: u64, kind: StreamKind, round: u64, index: u64) -> Self {
        const MASK: u64 = (1 << 28) - 1;
        let stream = ((kind as u64) << 56) | ((round & MASK) << 28) | (index & MASK);
        Self { seed, stream }
    }

    pub fn rng(&self) -> DetRng {
        DetRng::new(*self)
    }
}

/// Generator for one stream.
#[derive(Debug, Clone)]
pub struct DetRng {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl DetRng {
    pub fn new(state: RngState) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(state.seed);
        inner.set_stream(state.stream);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` by rejection (no modulo bias).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.normal()).collect()
    }

    /// Uniformly random direction on the unit sphere.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v = self.normal_vec(dim);
            let n = crate::vector::norm(&v);
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, len: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..len).collect();
        self.shuffle(&mut p);
        p
    }

    /// `count` distinct indices from `0..len`, sorted.
    pub fn sample_indices(&mut self, len: usize, count: usize) -> Vec<usize> {
        let mut p = self.permutation(len);
        p.truncate(count);
        p.sort_unstable();
        p
    }
}
