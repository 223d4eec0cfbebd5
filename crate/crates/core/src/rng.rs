//! Counter-based random streams.
//!
//! Every random consumer (permutation `i`, noise draw `i`, data repetition
//! `r`, sub-test block `s`, ...) gets its own [`RandomStream`], addressed by a
//! `(master_seed, stream_index)` pair. Streams are derived, never advanced, so
//! the values a consumer sees do not depend on which thread runs it or in
//! which order consumers are scheduled.
//!
//! Derivation formula for [`RandomStream::child`]:
//!
//! ```text
//! child.master_seed  = splitmix64(parent.master_seed ^ splitmix64(parent.stream_index))
//! child.stream_index = (purpose_tag << 48) | index          (index < 2^48)
//! ```
//!
//! The generator behind a stream is ChaCha8 keyed by four successive
//! splitmix64 outputs of `master_seed`, with the ChaCha stream id set to
//! `stream_index`.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed out by [`RandomStream::rng`].
pub type StreamRng = ChaCha8Rng;

const INDEX_BITS: u32 = 48;

/// Tag identifying what a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Permutation = 1,
    Noise = 2,
    Data = 3,
    Repetition = 4,
    Block = 5,
    Shuffle = 6,
    Response = 7,
    Randomization = 8,
    Cell = 9,
    Tulap = 10,
    Sample = 11,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Stream 0 of `seed`; the root every test run derives from.
    pub fn root(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Derives the stream for `(purpose, index)` below this one.
    ///
    /// # Panics
    ///
    /// If `index >= 2^48`.
    pub fn child(&self, purpose: Purpose, index: u64) -> Self {
        assert!(index < (1 << INDEX_BITS), "stream index {index} out of range");
        Self {
            master_seed: splitmix64(self.master_seed ^ splitmix64(self.stream_index)),
            stream_index: ((purpose as u64) << INDEX_BITS) | index,
        }
    }

    /// A 64-bit seed summarising this stream, for handing to APIs that take
    /// a plain seed (e.g. a nested [`crate::TestConfig`]).
    pub fn derive_seed(&self) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(self.stream_index ^ 0xD1B5_4A32_D192_ED03))
    }

    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// First uniform draw of this stream, in the open interval (0, 1).
    pub fn uniform(&self) -> f64 {
        uniform_open(&mut self.rng())
    }
}

/// Uniform draw in the open interval (0, 1) from 53 random bits.
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse CDF of the standard Laplace distribution.
pub fn laplace_quantile(u: f64) -> f64 {
    if u < 0.5 {
        (2.0 * u).ln()
    } else {
        -(2.0 * (1.0 - u)).ln()
    }
}

/// One standard Laplace(0, 1) draw: the inverse CDF applied to the stream's
/// first uniform.
pub fn laplace_sample(stream: &RandomStream) -> f64 {
    laplace_quantile(stream.uniform())
}

/// Uniformly random permutation of `0..len` (Fisher–Yates) from `stream`.
pub fn random_permutation(len: usize, stream: &RandomStream) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut stream.rng());
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn laplace_quantile_examples() {
        assert_eq!(laplace_quantile(0.5), 0.0);
        assert_abs_diff_eq!(laplace_quantile(0.75), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(laplace_quantile(0.25), -(2f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn stream_is_a_pure_function_of_its_address() {
        let a = RandomStream::new(7, 3).child(Purpose::Noise, 11);
        let b = RandomStream::new(7, 3).child(Purpose::Noise, 11);
        assert_eq!(a, b);
        let mut ra = a.rng();
        let mut rb = b.rng();
        for _ in 0..16 {
            assert_eq!(ra.next_u64(), rb.next_u64());
        }
    }

    #[test]
    fn distinct_addresses_give_distinct_sequences() {
        let root = RandomStream::root(1);
        let firsts: std::collections::HashSet<u64> = (0..1000)
            .map(|i| root.child(Purpose::Permutation, i).rng().next_u64())
            .chain((0..1000).map(|i| root.child(Purpose::Noise, i).rng().next_u64()))
            .collect();
        assert_eq!(firsts.len(), 2000);
    }

    #[test]
    fn uniform_is_strictly_inside_unit_interval() {
        let root = RandomStream::root(5);
        for i in 0..10_000 {
            let u = root.child(Purpose::Noise, i).uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn laplace_moments() {
        let root = RandomStream::root(2024);
        let n = 1_000_000u64;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let x = laplace_sample(&root.child(Purpose::Noise, i));
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 2.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn permutation_is_a_bijection() {
        let p = random_permutation(50, &RandomStream::root(9));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
