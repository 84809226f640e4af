//! Seeded random streams with labeled, position-independent substreams.
//!
//! A child stream depends only on the parent's seed and the label, never on
//! how many values the parent has already produced. This is what lets
//! per-strain and per-policy work run on any number of threads and still
//! produce bit-identical results.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Substream named by a text label.
    pub fn derive(&self, label: &str) -> Self {
        let mut h = splitmix64(self.seed ^ 0x6C61_6265_6C00_0000);
        for b in label.bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        Self::new(splitmix64(h ^ label.len() as u64))
    }

    /// Substream named by an integer (period index, strain key, member index).
    pub fn derive_index(&self, index: u64) -> Self {
        Self::new(splitmix64(splitmix64(self.seed ^ 0x696E_6465_7800_0000) ^ index))
    }

    /// Uniform draw on `[low, high]`; returns `low` for a degenerate interval.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        if low == high {
            return low;
        }
        low + (high - low) * self.rng.random::<f64>()
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.rng.random::<f64>() < p
        }
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }

    /// Uniform integer in `[low, high]`.
    pub fn range_inclusive(&mut self, low: usize, high: usize) -> usize {
        self.rng.random_range(low..=high)
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
