//! Deterministic random streams for a single optimizer run.
//!
//! A run owns one ChaCha8 key derived from its seed. Stream 0 drives example
//! sampling; stream `j + 1` drives the Gaussian noise of coordinate `j`. The
//! noise is therefore laid out coordinate-major: coordinate `j` sees the same
//! draws whatever the ambient dimension, which lets runs in different
//! dimensions share their leading-coordinate noise exactly.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// SplitMix64 finalizer, used to derive independent sub-seeds from a base
/// seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RunStreams {
    index: ChaCha8Rng,
    noise: Vec<ChaCha8Rng>,
}

impl RunStreams {
    pub fn new(seed: u64, dim: usize) -> Self {
        let base = ChaCha8Rng::seed_from_u64(seed);
        let stream = |id: u64| {
            let mut rng = base.clone();
            rng.set_stream(id);
            rng
        };
        Self {
            index: stream(0),
            noise: (0..dim as u64).map(|j| stream(j + 1)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.noise.len()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn sample_index(&mut self, n: usize) -> usize {
        self.index.random_range(0..n)
    }

    /// Fills `out` with one standard normal per coordinate.
    #[inline]
    pub fn fill_noise(&mut self, out: &mut [f64]) {
        for (o, rng) in out.iter_mut().zip(self.noise.iter_mut()) {
            *o = StandardNormal.sample(rng);
        }
    }
}
