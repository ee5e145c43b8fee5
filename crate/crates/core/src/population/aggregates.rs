use serde::{Deserialize, Serialize};

use super::{AgeGrid, CohortDensity, PopulationError};
use crate::stats::pairwise_sum;

/// How the guaranteed floor `p^min_t(a)` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PensionRule {
    /// Same floor for every pensioner; pensioners weighted by accrued
    /// contributions.
    Example1 { p_min: f64 },
    /// Base pension fixed at retirement (a fraction `alpha_p` of average
    /// accrued yearly wage, or the constant `p_ret`), indexed at `lambda`.
    Example2 { alpha_p: f64, lambda: f64, p_ret: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DemographicAggregates {
    pub n_r: f64,
    pub n_w: f64,
    /// Contribution rate `C` (currency/year).
    pub c: f64,
    /// Total floor `P^min` (currency/year).
    pub p_min_total: f64,
    /// Per-capita floor; for age-dependent floors, `P^min / N^r`.
    pub p_min: f64,
    /// Contribution-weighted pensioner mass `omega^r`.
    pub omega_r: f64,
    /// `int (p^min(a))^{1 - theta} n(a) da`.
    pub omega_r_tilde: f64,
}

/// Aggregates of the density `n` given per-bin wages, accrued contributions
/// `past` (`c_t(a)`), and floors (only read under `Example2`).
#[allow(clippy::too_many_arguments)]
pub fn aggregates(
    n: &CohortDensity,
    grid: &AgeGrid,
    wages: &[f64],
    alpha_c: f64,
    rule: &PensionRule,
    past: &[f64],
    floors: &[f64],
    theta: f64,
) -> Result<DemographicAggregates, PopulationError> {
    let bins = grid.bins();
    for v in [&n.0[..], wages, past] {
        if v.len() != bins {
            return Err(PopulationError::LengthMismatch { expected: bins, got: v.len() });
        }
    }
    if !(0.0..=1.0).contains(&alpha_c) {
        return Err(PopulationError::ContributionRate(alpha_c));
    }
    if let Some((bin, &wage)) = wages.iter().enumerate().find(|(_, w)| **w < 0.0) {
        return Err(PopulationError::NegativeWage { bin, wage });
    }
    let da = grid.da;
    let dens = &n.0;
    let workers = grid.workers();
    let retirees = grid.retirees();
    let weighted = |f: &dyn Fn(usize) -> f64, r: std::ops::Range<usize>| -> f64 {
        let terms: Vec<f64> = r.map(|i| f(i) * dens[i]).collect();
        pairwise_sum(&terms) * da
    };
    let n_w = n.mass(grid, workers.clone());
    let n_r = n.mass(grid, retirees.clone());
    let c = alpha_c * weighted(&|i| wages[i], workers);
    let omega_r = alpha_c * weighted(&|i| past[i], retirees.clone());
    let (p_min_total, p_min, omega_r_tilde) = match *rule {
        PensionRule::Example1 { p_min } => (n_r * p_min, p_min, p_min.powf(1.0 - theta) * n_r),
        PensionRule::Example2 { .. } => {
            if floors.len() != bins {
                return Err(PopulationError::LengthMismatch { expected: bins, got: floors.len() });
            }
            let total = weighted(&|i| floors[i], retirees.clone());
            let tilde = weighted(&|i| floors[i].powf(1.0 - theta), retirees);
            (total, if n_r > 0.0 { total / n_r } else { 0.0 }, tilde)
        }
    };
    Ok(DemographicAggregates { n_r, n_w, c, p_min_total, p_min, omega_r, omega_r_tilde })
}
