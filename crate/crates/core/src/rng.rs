//! Named, seeded random streams.
//!
//! Every consumer of randomness (weight init per layer, dropout masks,
//! epoch shuffles, engine split, tree subsampling) draws from its own
//! ChaCha8 stream. The stream id is a 64-bit FNV-1a hash of a label, so
//! streams are independent of one another and of call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A counter-based generator bound to `(seed, label)`.
#[derive(Debug, Clone)]
pub struct StreamRng {
    label: String,
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id(label));
        Self {
            label: label.to_string(),
            inner,
        }
    }

    /// Stream keyed by a label plus an integer index, e.g. one per boosting round.
    pub fn indexed(seed: u64, label: &str, index: u64) -> Self {
        Self::new(seed, &format!("{label}#{index}"))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[-bound, bound)`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        (2.0 * self.uniform() - 1.0) * bound
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.inner.random_range(lo..=hi)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

fn stream_id(label: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    label
        .bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_label_repeat() {
        let mut a = StreamRng::new(42, "cnn.conv1");
        let mut b = StreamRng::new(42, "cnn.conv1");
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn labels_give_independent_streams() {
        let mut a = StreamRng::new(42, "cnn.conv1");
        let mut b = StreamRng::new(42, "cnn.conv2");
        let xs: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = StreamRng::new(1, "split");
        let mut v: Vec<u32> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
