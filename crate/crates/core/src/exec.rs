//! Execution strategy and reproducible random streams.
//!
//! Every stochastic draw in a campaign comes from a [`ChaCha8Rng`] derived
//! from `(seed, tags)`, where the tags name the purpose and the position of
//! the draw (separation index, repetition index, ...). Work items never share
//! a generator, so results do not depend on how items are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Whether index-parallel loops run on the rayon pool or on the calling thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Uses the current rayon pool when the `parallel` feature is enabled,
    /// falls back to sequential otherwise.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Map `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Fallible variant of [`map_indexed`]; returns the lowest-index error.
pub fn try_map_indexed<T, E, F>(n: usize, execution: Execution, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, execution, f).into_iter().collect()
}

/// Purpose tags that keep independent streams apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Calibration = 1,
    Estimation = 2,
    Reference = 3,
    Differential = 4,
    Scratch = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Root of a family of keyed random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A child root whose streams are disjoint from this one's.
    pub fn child(&self, tag: u64) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0xA5A5_5A5A))),
        }
    }

    /// Generator keyed by a purpose and a list of indices.
    pub fn rng(&self, stream: Stream, indices: &[u64]) -> ChaCha8Rng {
        let mut key = splitmix64(self.seed ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
        for &i in indices {
            key = splitmix64(key ^ splitmix64(i));
        }
        ChaCha8Rng::seed_from_u64(key)
    }
}
