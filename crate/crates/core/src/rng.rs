//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a stream addressed by
//! `(master_seed, purpose, index)`. The key is built by mixing the seed with
//! the purpose tag and the index selects one of the 2^64 ChaCha streams under
//! that key, so any draw can be regenerated without replaying the ones before
//! it. Gaussian variates use the Box–Muller transform on uniform draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Problem data generation (design matrix, targets, operator).
    Data,
    /// Gradient noise in the discrete algorithms.
    GradientNoise,
    /// Brownian increments in the SDE integrators.
    Brownian,
    /// Power-iteration start vectors.
    PowerIteration,
    /// Bootstrap resampling.
    Bootstrap,
    /// Free-form streams for tests and tooling.
    Aux(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Data => 0x6461_7461,
            Purpose::GradientNoise => 0x6e6f_6973_65,
            Purpose::Brownian => 0x6272_6f77_6e,
            Purpose::PowerIteration => 0x706f_7765_72,
            Purpose::Bootstrap => 0x626f_6f74,
            Purpose::Aux(x) => splitmix64(0x6175_78 ^ x),
        }
    }
}

/// SplitMix64 finalizer. Used to derive per-seed and per-purpose keys.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of ensemble member `index` under `master_seed`.
pub fn mix_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index.wrapping_add(0x5eed)))
}

/// A random stream positioned at the start of `(seed, purpose, index)`.
pub struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed) ^ purpose.tag());
        rng.set_stream(index);
        Stream { rng, spare: None }
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Standard normal draw (Box–Muller, both outputs used).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    /// `k` distinct indices drawn uniformly from `0..n` (partial Fisher–Yates).
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
