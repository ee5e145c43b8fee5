use serde::{Deserialize, Serialize};

use crate::stochastic::{dot, norm_sq};

/// One step of the shift fund, a buffer fund receiving `C` and paying the
/// floor total `P^min`:
/// `X' = X + (X r + C - P^min + delta_x . eta) dt + delta_x . dW`.
#[allow(clippy::too_many_arguments)]
pub fn step_shift(x: f64, delta_x: &[f64], r: f64, c: f64, p_min: f64, eta: &[f64], dw: &[f64], dt: f64) -> f64 {
    x + (x * r + c - p_min + dot(delta_x, eta)) * dt + dot(delta_x, dw)
}

/// Pensioner preference coefficient: geometric with constant coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZProcess {
    pub z0: f64,
    pub drift: f64,
    pub vol: Vec<f64>,
}

impl ZProcess {
    pub fn step(&self, z: f64, dw: &[f64], dt: f64) -> f64 {
        if self.drift == 0.0 && self.vol.iter().all(|v| *v == 0.0) {
            return z;
        }
        z * ((self.drift - 0.5 * norm_sq(&self.vol)) * dt + dot(&self.vol, dw)).exp()
    }
}
