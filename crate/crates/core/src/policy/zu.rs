use crate::stochastic::{dot, norm_sq};

use super::PolicyError;

/// Per-step inputs of the coefficient dynamics (left-point values).
#[derive(Debug, Clone, Copy)]
pub struct ZuStep<'a> {
    pub r: f64,
    /// `|delta^R + eta|^2`.
    pub a_sq: f64,
    pub delta: &'a [f64],
    /// Payout intensity numerator `(P^min)^{1-1/theta} w^{1/theta}`.
    pub phi: f64,
}

impl ZuStep<'_> {
    fn r_tilde(&self, theta: f64) -> f64 {
        (1.0 - theta) * self.r + (1.0 - theta) / (2.0 * theta) * self.a_sq
    }
}

/// Drift `b` making the shifted power utility consistent, given the payout
/// intensity `kappa = phi Zu^{-1/theta}`.
pub fn consistency_drift(theta: f64, r: f64, a_sq: f64, kappa: f64) -> f64 {
    -(1.0 - theta) * r - (1.0 - theta) / (2.0 * theta) * a_sq - theta * kappa
}

/// Explicit representation `Zu = xi^{-1} (Zu0^{1/theta} - A)^theta` with the
/// auxiliary exponential `xi` and the accrual `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZuState {
    pub zu: f64,
    pub log_xi: f64,
    pub accrual: f64,
    pub zu0: f64,
    pub theta: f64,
    pub tau: Option<f64>,
}

impl ZuState {
    pub fn new(zu0: f64, theta: f64) -> Self {
        Self { zu: zu0, log_xi: 0.0, accrual: 0.0, zu0, theta, tau: None }
    }

    pub fn capacity(&self) -> f64 {
        self.zu0.powf(1.0 / self.theta)
    }

    pub fn xi(&self) -> f64 {
        self.log_xi.exp()
    }

    pub fn stopped(&self) -> bool {
        self.tau.is_some()
    }

    /// Advances over `[t, t + dt]`. On crossing, `tau` is placed by linear
    /// interpolation of the accrual and `Zu` is set to 0.
    pub fn advance(&mut self, step: &ZuStep<'_>, dw: &[f64], t: f64, dt: f64) -> Result<(), PolicyError> {
        if let Some(tau) = self.tau {
            return Err(PolicyError::AlreadyStopped { tau });
        }
        let th = self.theta;
        let increment = step.phi * (self.log_xi / th).exp() * dt;
        let cap = self.capacity();
        let accrual = self.accrual + increment;
        self.log_xi += (step.r_tilde(th) + 0.5 * norm_sq(step.delta)) * dt - dot(step.delta, dw);
        if accrual >= cap {
            self.tau = Some(t + dt * (cap - self.accrual) / increment);
            self.accrual = cap;
            self.zu = 0.0;
        } else {
            self.accrual = accrual;
            self.zu = (-self.log_xi).exp() * (cap - accrual).powf(th);
        }
        Ok(())
    }
}

/// Direct discretizations of the coefficient SDE
/// `dZu = -Zu r~ dt - theta phi Zu^{1-1/theta} dt + Zu delta . dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZuEuler {
    pub zu: f64,
    pub theta: f64,
    pub tau: Option<f64>,
}

impl ZuEuler {
    pub fn new(zu0: f64, theta: f64) -> Self {
        Self { zu: zu0, theta, tau: None }
    }

    /// Additive Euler step.
    pub fn step(&mut self, step: &ZuStep<'_>, dw: &[f64], t: f64, dt: f64) -> Result<(), PolicyError> {
        if let Some(tau) = self.tau {
            return Err(PolicyError::AlreadyStopped { tau });
        }
        let th = self.theta;
        let zu = self.zu;
        let next = zu + (-zu * step.r_tilde(th) - th * step.phi * zu.powf(1.0 - 1.0 / th)) * dt + zu * dot(step.delta, dw);
        if next > 0.0 {
            self.zu = next;
        } else {
            self.zu = 0.0;
            self.tau = Some(t + dt);
        }
        Ok(())
    }

    /// Log-Euler step with the drift scaled by `1 + perturbation`.
    pub fn step_log(&mut self, step: &ZuStep<'_>, perturbation: f64, dw: &[f64], t: f64, dt: f64) -> Result<(), PolicyError> {
        if let Some(tau) = self.tau {
            return Err(PolicyError::AlreadyStopped { tau });
        }
        let th = self.theta;
        let kappa = step.phi * self.zu.powf(-1.0 / th);
        let b = consistency_drift(th, step.r, step.a_sq, kappa) * (1.0 + perturbation);
        self.zu *= ((b - 0.5 * norm_sq(step.delta)) * dt + dot(step.delta, dw)).exp();
        if !(self.zu > 0.0) || !self.zu.is_finite() {
            self.zu = 0.0;
            self.tau = Some(t + dt);
        }
        Ok(())
    }
}
