use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::stats::ls_slope;
use crate::stochastic::{axpy, norm, sub};
use crate::utility::UtilityError;

/// `phi = (P^min)^{1-1/theta} w^{1/theta}`, so that the optimal pension
/// excess over the floor total is `cushion * phi * Zu^{-1/theta}`.
pub fn payout_intensity(theta: f64, w: f64, p_min: f64) -> Result<f64, PolicyError> {
    if w == 0.0 {
        return Ok(0.0);
    }
    if !(p_min > 0.0) {
        return Err(PolicyError::MissingFloor { weight: w });
    }
    Ok(p_min.powf(1.0 - 1.0 / theta) * w.powf(1.0 / theta))
}

/// State and coefficients the closed-form controls depend on.
#[derive(Debug, Clone, Copy)]
pub struct ControlInputs<'a> {
    pub theta: f64,
    pub x: f64,
    pub zu: f64,
    /// Marginal pension weight `w = Z * weight` of the pensioners' utility.
    pub w: f64,
    pub p_min: f64,
    /// `delta^R + eta`.
    pub a: &'a [f64],
    pub delta_x: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub pi: Vec<f64>,
    pub rho: f64,
    /// `rho - 1`, kept separately for precision near the floor.
    pub rho_excess: f64,
}

/// Controls at cushion `g >= 0`; `g = 0` gives the boundary limits.
pub fn controls_from_cushion(g: f64, inp: &ControlInputs<'_>) -> Result<Controls, PolicyError> {
    let pi = axpy(g / inp.theta, inp.a, inp.delta_x);
    let rho_excess = if inp.w == 0.0 {
        0.0
    } else if inp.p_min > 0.0 {
        g * (inp.w / (inp.p_min * inp.zu)).powf(1.0 / inp.theta)
    } else {
        return Err(PolicyError::MissingFloor { weight: inp.w });
    };
    Ok(Controls { pi, rho: 1.0 + rho_excess, rho_excess })
}

/// Optimal investment and pension adjustment at fund level `z > X`.
pub fn optimal_controls(z: f64, inp: &ControlInputs<'_>) -> Result<Controls, PolicyError> {
    let g = z - inp.x;
    if !(g > 0.0) {
        return Err(UtilityError::OutOfDomain { z, bound: inp.x }.into());
    }
    controls_from_cushion(g, inp)
}

/// Per-age optimal pensions `p*(a) = p^min(a) rho*`.
pub fn pension_schedule(floors: &[f64], rho: f64) -> Vec<f64> {
    floors.iter().map(|p| p * rho).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub cushion: f64,
    pub pi_gap: f64,
    pub rho_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub rows: Vec<BoundaryRow>,
    /// `|a| / theta`.
    pub pi_slope: f64,
    /// `(w / (P^min Zu))^{1/theta}`.
    pub rho_slope: f64,
    pub fitted_pi_slope: f64,
    pub fitted_rho_slope: f64,
    /// Largest relative deviation of `gap(g/2) / gap(g)` from 1/2.
    pub max_halving_deviation: f64,
    pub limit_pi_gap: f64,
    pub limit_rho_gap: f64,
}

/// Distance of the controls from their boundary values `(delta_x, 1)` along a
/// grid of cushions shrinking towards 0.
pub fn boundary_limits_probe(inp: &ControlInputs<'_>, cushions: &[f64]) -> Result<BoundaryReport, PolicyError> {
    let gaps = |g: f64| -> Result<(f64, f64), PolicyError> {
        let c = controls_from_cushion(g, inp)?;
        Ok((norm(&sub(&c.pi, inp.delta_x)), c.rho_excess))
    };
    let mut rows = Vec::with_capacity(cushions.len());
    let mut dev: f64 = 0.0;
    for &g in cushions {
        let (pi_gap, rho_gap) = gaps(g)?;
        let (pi_half, rho_half) = gaps(0.5 * g)?;
        for (full, half) in [(pi_gap, pi_half), (rho_gap, rho_half)] {
            if full != 0.0 {
                dev = dev.max((half / full - 0.5).abs() / 0.5);
            }
        }
        rows.push(BoundaryRow { cushion: g, pi_gap, rho_gap });
    }
    let (limit_pi_gap, limit_rho_gap) = gaps(0.0)?;
    let through_origin = |f: &dyn Fn(&BoundaryRow) -> f64| {
        let mut xs: Vec<f64> = vec![0.0];
        let mut ys: Vec<f64> = vec![0.0];
        xs.extend(rows.iter().map(|r| r.cushion));
        ys.extend(rows.iter().map(f));
        ls_slope(&xs, &ys)
    };
    let rho_slope = if inp.w == 0.0 { 0.0 } else { (inp.w / (inp.p_min * inp.zu)).powf(1.0 / inp.theta) };
    Ok(BoundaryReport {
        pi_slope: norm(inp.a) / inp.theta,
        rho_slope,
        fitted_pi_slope: through_origin(&|r| r.pi_gap),
        fitted_rho_slope: through_origin(&|r| r.rho_gap),
        max_halving_deviation: dev,
        limit_pi_gap,
        limit_rho_gap,
        rows,
    })
}
