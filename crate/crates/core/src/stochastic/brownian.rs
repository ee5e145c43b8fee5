//! Reproducible Brownian increments.
//!
//! Every increment is addressed by `(seed, path_id, step, dim)`: the ChaCha8
//! key comes from `seed`, the stream from `path_id`, and the word position
//! from `(step, dim)`. Each standard normal consumes exactly four 32-bit
//! words (two `u64` through Box-Muller), so sequential generation of a path
//! and random access to one increment yield the same bits, independent of
//! thread scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{StochasticError, TimeGrid};

const WORDS_PER_NORMAL: u128 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    increments: Vec<f64>,
    steps: usize,
    dim: usize,
    dt: f64,
    pub seed: u64,
    pub path_id: u64,
}

impl BrownianPath {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Increment over `[t_k, t_{k+1}]`.
    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// Row-major `steps x dim` increments.
    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    /// Value `W_{t_k}` obtained by cumulative summation.
    pub fn level(&self, k: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for j in 0..k {
            for (wi, di) in w.iter_mut().zip(self.row(j)) {
                *wi += di;
            }
        }
        w
    }

    /// Same path on a grid with `factor` times fewer steps: consecutive
    /// increments are summed.
    pub fn coarsen(&self, factor: usize) -> Result<Self, StochasticError> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(StochasticError::BadCoarsening { factor, steps: self.steps });
        }
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * self.dim];
        for k in 0..steps {
            for j in 0..factor {
                let src = self.row(k * factor + j);
                for (d, s) in increments[k * self.dim..(k + 1) * self.dim].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        Ok(Self { increments, steps, dim: self.dim, dt: self.dt * factor as f64, ..*self })
    }
}

fn normal_from_words(rng: &mut ChaCha8Rng) -> f64 {
    let a = rng.next_u64();
    let b = rng.next_u64();
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn stream(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// Generate `grid.steps() x n` increments with variance `dt`.
pub fn sample_brownian(grid: &TimeGrid, n: usize, seed: u64, path_id: u64) -> BrownianPath {
    assert!(n >= 1, "Brownian dimension must be at least 1");
    let steps = grid.steps();
    let dt = grid.dt();
    let sd = dt.sqrt();
    let mut rng = stream(seed, path_id);
    let increments = (0..steps * n).map(|_| sd * normal_from_words(&mut rng)).collect();
    BrownianPath { increments, steps, dim: n, dt, seed, path_id }
}

/// Random access to a single increment; agrees bit-for-bit with
/// [`sample_brownian`].
pub fn brownian_increment_at(seed: u64, path_id: u64, step: usize, dim: usize, n: usize, dt: f64) -> f64 {
    let mut rng = stream(seed, path_id);
    rng.set_word_pos((step as u128 * n as u128 + dim as u128) * WORDS_PER_NORMAL);
    dt.sqrt() * normal_from_words(&mut rng)
}
