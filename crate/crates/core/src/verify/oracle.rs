//! Brute-force maximization of the drift operators `P` and `Q`, independent
//! of the closed-form controls.

use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::stochastic::{axpy, dot, SubspaceProjector};
use crate::utility::{operator_p, operator_q, CrraFundUtility, PensionersUtility};

/// Points of the search grid on each bracket.
pub const GRID_POINTS: usize = 1001;
const MAX_EXPANSIONS: usize = 60;
const SWEEPS: usize = 4;

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
pub fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Index of the best finite grid value.
fn grid_argmax(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (usize, f64) {
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..GRID_POINTS {
        let v = f(lo + i as f64 * step);
        if v.is_finite() && v > best.1 {
            best = (i, v);
        }
    }
    (best.0, step)
}

/// Maximizer of `f` over the line, starting from a bracket around `center`
/// that widens until the grid maximum is interior. Returns the refined
/// maximizer and the final grid step.
fn line_max(f: &dyn Fn(f64) -> f64, center: f64) -> (f64, f64) {
    let mut h = 1.0 + center.abs();
    for _ in 0..MAX_EXPANSIONS {
        let lo = center - h;
        let (i, step) = grid_argmax(f, lo, center + h);
        if i > 0 && i < GRID_POINTS - 1 {
            let x = lo + i as f64 * step;
            return (golden_max(f, x - step, x + step), step);
        }
        h *= 4.0;
    }
    (f64::NAN, f64::NAN)
}

/// Maximizer of `f` over `[1, inf)`; the bracket `[1, hi]` grows until the
/// grid maximum is not at its upper end.
fn half_line_max(f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let mut hi = 2.0;
    for _ in 0..MAX_EXPANSIONS {
        let (i, step) = grid_argmax(f, 1.0, hi);
        if i < GRID_POINTS - 1 {
            let x = 1.0 + i as f64 * step;
            return (golden_max(f, (x - step).max(1.0), x + step), step);
        }
        hi = 1.0 + 4.0 * (hi - 1.0);
    }
    (f64::NAN, f64::NAN)
}

/// One state at which both operators are maximized.
#[derive(Debug, Clone, Copy)]
pub struct OracleState<'a> {
    pub u: &'a CrraFundUtility,
    pub v: &'a PensionersUtility,
    pub z: f64,
    pub p_min: f64,
    pub gamma_z: &'a [f64],
    pub eta: &'a [f64],
    pub projector: &'a SubspaceProjector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub pi: Vec<f64>,
    /// Coordinates of `pi` in the orthonormal basis of the range.
    pub coords: Vec<f64>,
    /// Final grid step per coordinate.
    pub pi_steps: Vec<f64>,
    pub rho: f64,
    pub rho_step: f64,
}

impl OracleResult {
    /// Largest deviation from the candidate maximizers in units of
    /// `tol_steps` grid steps; at most 1 means agreement.
    pub fn normalized_deviation(&self, projector: &SubspaceProjector, pi: &[f64], rho: f64, tol_steps: f64) -> f64 {
        let mut dev: f64 = (self.rho - rho).abs() / (tol_steps * self.rho_step);
        for ((e, c), s) in projector.basis().iter().zip(&self.coords).zip(&self.pi_steps) {
            dev = dev.max((dot(e, pi) - c).abs() / (tol_steps * s));
        }
        dev
    }
}

/// Coordinate ascent of `Q` over the range of `sigma^T` and a bracketed grid
/// search of `P` over `rho >= 1`.
pub fn argmax_oracle(state: &OracleState<'_>) -> Result<OracleResult, VerifyError> {
    let basis = state.projector.basis();
    let n = state.projector.dim();
    let q = |pi: &[f64]| operator_q(state.u, state.z, pi, state.gamma_z, state.eta, state.projector);
    q(&vec![0.0; n])?;
    let mut coords = vec![0.0; basis.len()];
    let mut steps = vec![f64::NAN; basis.len()];
    let assemble = |c: &[f64]| basis.iter().zip(c).fold(vec![0.0; n], |acc, (e, ci)| axpy(*ci, e, &acc));
    for _ in 0..SWEEPS {
        for j in 0..basis.len() {
            let base = assemble(&coords);
            let cj = coords[j];
            let f = |c: f64| q(&axpy(c - cj, &basis[j], &base)).unwrap_or(f64::NEG_INFINITY);
            let (best, step) = line_max(&f, cj);
            coords[j] = best;
            steps[j] = step;
        }
    }
    let p = |rho: f64| operator_p(state.u, state.v, state.z, rho, state.p_min).unwrap_or(f64::NEG_INFINITY);
    operator_p(state.u, state.v, state.z, 2.0, state.p_min)?;
    let (rho, rho_step) = half_line_max(&p);
    Ok(OracleResult { pi: assemble(&coords), coords, pi_steps: steps, rho, rho_step })
}
