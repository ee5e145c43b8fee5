use serde::{Deserialize, Serialize};

use super::StochasticError;

/// Uniform partition of `[t0, t1]` into `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self, StochasticError> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            return Err(StochasticError::NonpositiveHorizon { t0, t1 });
        }
        if steps < 1 {
            return Err(StochasticError::ZeroSteps);
        }
        Ok(Self { t0, t1, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    /// Time of grid point `k` (`0 ..= steps`).
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Index of the grid point nearest to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt()).round();
        k.clamp(0.0, self.steps as f64) as usize
    }

    /// Same horizon with `factor` times fewer steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self, StochasticError> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(StochasticError::BadCoarsening { factor, steps: self.steps });
        }
        Self::new(self.t0, self.t1, self.steps / factor)
    }
}
