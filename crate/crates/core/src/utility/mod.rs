//! Shifted-power dynamic utilities: the fund utility `U`, the aggregated
//! pensioners' utility `V`, their conjugates, the drift operators and the
//! local characteristics of `U` along a shift and a coefficient process.

mod crra;
mod operators;

pub use crra::{CrraFundUtility, FundValues, PensionWeight, PensionersUtility};
pub use operators::{
    crra_characteristics, gamma_z_bound, hjb_drift_residual, operator_p, operator_q, HjbInputs, HjbResidual,
    LocalCharacteristics, ShiftDynamics, ZuDynamics,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("point {z} outside the domain (must exceed {bound})")]
    OutOfDomain { z: f64, bound: f64 },
    #[error("dual variable must be positive, got {0}")]
    NonpositiveDual(f64),
    #[error("theta must lie in (0,1), got {0}")]
    InvalidTheta(f64),
    #[error("utility coefficient must be positive and finite, got {0}")]
    InvalidCoefficient(f64),
    #[error("pension weight {weight} requires a positive floor total, got {p_min}")]
    MissingFloor { weight: f64, p_min: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub(crate) fn check_theta(theta: f64) -> Result<(), UtilityError> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(UtilityError::InvalidTheta(theta))
    }
}
