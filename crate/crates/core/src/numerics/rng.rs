use num_complex::Complex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::ComplexMatrix;
use crate::scalar::Real;

/// Counter-based random stream keyed by `(master_seed, stream_id)`.
///
/// Backed by ChaCha20: the seed fixes the key and the stream id selects an
/// independent 64-bit nonce, so any `(seed, id)` pair can be regenerated
/// without replaying other streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream under the same master seed, keyed by this stream's id and `tag`.
    /// Independent of how many values have been drawn from `self`.
    pub fn derive(&self, tag: u64) -> Self {
        Self::new(self.master_seed, mix(self.stream_id ^ mix(tag)))
    }

    /// Derives through a sequence of tags.
    pub fn derive_path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(self.clone(), |s, &t| s.derive(t))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Matrix of iid circularly symmetric `CN(0, variance)` entries.
pub fn sample_cn<T: Real>(rows: usize, cols: usize, variance: f64, rng: &mut RngStream) -> ComplexMatrix<T> {
    assert!(variance >= 0.0, "variance must be nonnegative");
    let s = (variance / 2.0).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re = rng.standard_normal();
        let im = rng.standard_normal();
        Complex::new(T::lit(s * re), T::lit(s * im))
    })
}
