//! Deterministic random-number streams for Monte Carlo paths.
//!
//! Each path owns an [`RngStream`] keyed by `(seed, path_index)`. Streams are
//! backed by ChaCha12 with the path index mapped to the cipher's stream
//! parameter, so any subset of paths can be generated in any order, on any
//! number of threads, and still reproduce the exact same Gaussian sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// An independent, reproducible Gaussian stream identified by
/// `(seed, path_index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    path_index: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        RngStream {
            seed,
            path_index,
            rng,
        }
    }

    /// Stream for sample `sample_index` of the `eps_index`-th epsilon in a
    /// sweep. The path index packs both counters:
    /// `path_index = (eps_index + 1) << 40 | sample_index`, so sweeps with
    /// distinct epsilon positions never share a stream, and plain
    /// single-problem runs (`eps_index` slot 0, see [`RngStream::new`]) do not
    /// collide with sweep streams.
    pub fn for_sample(seed: u64, eps_index: usize, sample_index: usize) -> Self {
        assert!(
            (sample_index as u64) < (1u64 << 40),
            "sample index exceeds stream packing capacity"
        );
        let path_index = ((eps_index as u64 + 1) << 40) | sample_index as u64;
        RngStream::new(seed, path_index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Next standard normal draw.
    pub fn next_gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// `count` independent standard normal draws.
    pub fn gaussian_increments(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.next_gaussian()).collect()
    }
}
