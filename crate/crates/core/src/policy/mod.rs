//! Optimal controls and the processes they drive: the shift fund, the utility
//! coefficient `Zu` with its hitting time, and the optimal buffer fund.

mod controls;
mod fund;
mod shift;
mod zu;

pub use controls::{
    boundary_limits_probe, controls_from_cushion, optimal_controls, payout_intensity, pension_schedule, BoundaryReport,
    BoundaryRow, ControlInputs, Controls,
};
pub use fund::{
    kernel_identity_error, marginal_kernel_path, simulate_budget_fund, simulate_optimal_fund, BudgetPath, FundPath,
    FundRecord, KernelResidualReport, RecordPlan, Strategy,
};
pub use shift::{step_shift, ZProcess};
pub use zu::{consistency_drift, ZuEuler, ZuState, ZuStep};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{MarketError, MarketModel};
use crate::population::PensionRule;
use crate::stochastic::{axpy, StochasticError};
use crate::utility::UtilityError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error("coefficient process already stopped at {tau}")]
    AlreadyStopped { tau: f64 },
    #[error("initial fund {f0} must exceed the initial shift {x0}")]
    InitialInsolvency { f0: f64, x0: f64 },
    #[error("pension weight {weight} with zero floor total makes the pension unbounded")]
    MissingFloor { weight: f64 },
    #[error("demographic series has {got} points, the time grid needs {expected}")]
    DemographyLength { expected: usize, got: usize },
    #[error("shift volatility has an unhedgeable component of norm {perp_norm}")]
    ShiftNotHedgeable { perp_norm: f64 },
    #[error("path was not recorded at every step")]
    NotFullyRecorded,
    #[error("cushion left the domain at step {step}")]
    NonpositiveCushion { step: usize },
}

/// Tolerance on the unhedgeable part of the shift volatility.
pub const SHIFT_RANGE_TOL: f64 = 1e-10;

/// Scenario-level constants of the fund problem; the market and the
/// demographic series are passed alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundSetup {
    pub theta: f64,
    pub zu0: f64,
    /// Volatility of `Zu`.
    pub delta: Vec<f64>,
    /// Volatility of the shift fund; must lie in the hedgeable subspace.
    pub delta_x: Vec<f64>,
    pub f0: f64,
    pub x0: f64,
    pub z: ZProcess,
    pub rule: PensionRule,
    /// Relative change of the `Zu` drift away from its consistent value.
    /// Nonzero values deliberately break consistency.
    #[serde(default)]
    pub zu_drift_perturbation: f64,
}

impl FundSetup {
    /// `a = delta^R + eta`, the direction of the optimal exposure.
    pub fn exposure(&self, market: &MarketModel) -> Vec<f64> {
        axpy(1.0, market.eta(), &market.projector().apply(&self.delta))
    }

    /// `delta^perp`, the unhedgeable part of the `Zu` volatility.
    pub fn delta_perp(&self, market: &MarketModel) -> Vec<f64> {
        market.projector().project(&self.delta).1
    }

    pub fn check(&self, market: &MarketModel) -> Result<(), PolicyError> {
        if !(self.f0 > self.x0) {
            return Err(PolicyError::InitialInsolvency { f0: self.f0, x0: self.x0 });
        }
        let n = market.n();
        for v in [&self.delta, &self.delta_x, &self.z.vol] {
            if v.len() != n {
                return Err(StochasticError::DimensionMismatch { expected: n, got: v.len() }.into());
            }
        }
        let perp_norm = market.projector().perp_norm(&self.delta_x);
        if perp_norm > SHIFT_RANGE_TOL * (1.0 + crate::stochastic::norm(&self.delta_x)) {
            return Err(PolicyError::ShiftNotHedgeable { perp_norm });
        }
        crate::utility::CrraFundUtility::new(self.theta, self.zu0, self.x0)?;
        Ok(())
    }
}
