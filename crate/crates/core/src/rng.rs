//! Counter-based random substreams.
//!
//! Every draw in the library comes from a [`StreamRng`] keyed by a seed and
//! a list of labels (purpose tag, iteration, batch index, ...). A substream
//! depends only on its key, never on how many other substreams were consumed
//! before it, so results do not change with thread count or evaluation
//! order. The generator behind a key is ChaCha8, whose output is specified
//! bit-for-bit and portable.

use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::special::norm_inv_cdf;

/// Purpose tags separating the substreams used by different consumers.
pub mod tag {
    pub const NET_INIT: u64 = 0x696e_6974;
    pub const SAMPLE_X: u64 = 0x7361_6d78;
    pub const SAMPLE_Y: u64 = 0x7361_6d79;
    pub const EVAL: u64 = 0x6576_616c;
    pub const STATIC: u64 = 0x7374_6174;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    /// Substream for `(seed, labels...)`. Distinct label lists give
    /// statistically independent streams.
    pub fn substream(seed: u64, labels: &[u64]) -> Self {
        let mut state = seed;
        let mut mix = splitmix64(&mut state);
        for &label in labels {
            state ^= label.wrapping_mul(0xd6e8_feb8_6659_fd93).wrapping_add(mix);
            mix = splitmix64(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        // encode the label count so that [] and [0] differ
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(labels.len() as u64);
        Self { inner }
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inversion: `Φ^{-1}(U)` with `U` uniform on (0, 1).
    pub fn standard_normal(&mut self) -> f64 {
        norm_inv_cdf(self.uniform_open())
    }

    /// Uniform index in `0..n` (`n ≥ 1`), rejection-free for practical `n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}
