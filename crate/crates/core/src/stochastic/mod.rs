//! Discretization primitives shared by every simulated process: uniform time
//! grids, reproducible Brownian increments, Euler stepping and the orthogonal
//! split of `R^n` into the hedgeable subspace and its complement.

mod brownian;
mod grid;
mod projector;
mod vector;

pub use brownian::{brownian_increment_at, sample_brownian, BrownianPath};
pub use grid::TimeGrid;
pub use projector::{SubspaceProjector, CONDITION_LIMIT};
pub use vector::{add, axpy, dot, norm, norm_sq, scale, sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("horizon must be positive (t0 = {t0}, t1 = {t1})")]
    NonpositiveHorizon { t0: f64, t1: f64 },
    #[error("time grid needs at least one step")]
    ZeroSteps,
    #[error("volatility matrix is numerically rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coarsening factor {factor} does not divide {steps} steps")]
    BadCoarsening { factor: usize, steps: usize },
}

/// One Euler step `x + drift dt + vol . dW` for an Ito process.
pub fn euler_step(x: f64, drift: f64, vol: &[f64], dw: &[f64], dt: f64) -> Result<f64, StochasticError> {
    if vol.len() != dw.len() {
        return Err(StochasticError::DimensionMismatch { expected: vol.len(), got: dw.len() });
    }
    if !(x.is_finite() && drift.is_finite() && dt.is_finite())
        || vol.iter().chain(dw).any(|v| !v.is_finite())
    {
        return Err(StochasticError::NonFinite { context: "euler_step input" });
    }
    let out = x + drift * dt + dot(vol, dw);
    if !out.is_finite() {
        return Err(StochasticError::NonFinite { context: "euler_step result" });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_zero_coefficients() {
        assert_eq!(euler_step(1.0, 0.0, &[0.0, 0.0], &[0.7, -1.3], 0.1).unwrap(), 1.0);
    }

    #[test]
    fn euler_pure_drift() {
        assert_eq!(euler_step(1.0, 2.0, &[0.0, 0.0], &[0.0, 0.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn euler_substitution() {
        let x = euler_step(0.0, 1.0, &[1.0, 0.0], &[0.3, 0.9], 0.1).unwrap();
        assert!((x - 0.4).abs() < 1e-15);
    }

    #[test]
    fn euler_rejects_non_finite() {
        assert!(matches!(
            euler_step(f64::NAN, 0.0, &[0.0], &[0.0], 0.1),
            Err(StochasticError::NonFinite { .. })
        ));
        assert!(matches!(
            euler_step(f64::MAX, f64::MAX, &[0.0], &[0.0], 10.0),
            Err(StochasticError::NonFinite { .. })
        ));
    }
}
