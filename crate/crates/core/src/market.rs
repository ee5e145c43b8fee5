//! Incomplete Ito market with `d` risky assets driven by an `n`-dimensional
//! Brownian motion, its risk premium and the family of discounted pricing
//! kernels indexed by an orthogonal volatility `nu`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::stochastic::{dot, norm_sq, BrownianPath, StochasticError, SubspaceProjector, TimeGrid};

/// Tolerance on `P nu` for a kernel volatility to count as orthogonal.
pub const NU_ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error("kernel volatility has a hedgeable component of norm {norm:e} at step {step}")]
    NuNotOrthogonal { step: usize, norm: f64 },
    #[error("initial kernel value must be positive, got {0}")]
    NonpositiveKernel(f64),
    #[error("drift vector has length {got}, expected {expected}")]
    DriftLength { expected: usize, got: usize },
    #[error("short-rate table has {got} entries, grid needs {expected}")]
    RateTable { expected: usize, got: usize },
}

/// Short rate, constant or tabulated per grid step.
#[derive(Debug, Clone, PartialEq)]
pub enum ShortRate {
    Constant(f64),
    Tabulated(Vec<f64>),
}

impl ShortRate {
    #[inline]
    pub fn at(&self, step: usize) -> f64 {
        match self {
            ShortRate::Constant(r) => *r,
            ShortRate::Tabulated(v) => v[step.min(v.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub r: ShortRate,
    pub mu: Vec<f64>,
    projector: SubspaceProjector,
    eta: Vec<f64>,
}

/// `eta = sigma^T (sigma sigma^T)^{-1} (mu - r 1_d)`.
pub fn risk_premium(mu: &[f64], r: f64, sigma: &DMatrix<f64>) -> Result<Vec<f64>, MarketError> {
    let proj = SubspaceProjector::new(sigma.clone())?;
    premium_with(&proj, mu, r)
}

fn premium_with(proj: &SubspaceProjector, mu: &[f64], r: f64) -> Result<Vec<f64>, MarketError> {
    let sigma = proj.sigma();
    let d = sigma.nrows();
    if mu.len() != d {
        return Err(MarketError::DriftLength { expected: d, got: mu.len() });
    }
    let excess = DVector::from_iterator(d, mu.iter().map(|m| m - r));
    let gram = sigma * sigma.transpose();
    let solved = gram
        .lu()
        .solve(&excess)
        .ok_or(StochasticError::RankDeficient { condition: f64::INFINITY })?;
    Ok((sigma.transpose() * solved).iter().copied().collect())
}

impl MarketModel {
    /// Market with a constant short rate.
    pub fn new(r: f64, mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self, MarketError> {
        let projector = SubspaceProjector::new(sigma)?;
        let eta = premium_with(&projector, &mu, r)?;
        Ok(Self { r: ShortRate::Constant(r), mu, projector, eta })
    }

    /// Market whose short rate follows a deterministic table over `grid`.
    /// The risk premium is computed from the initial rate: with a moving rate
    /// the asset drift is taken to move with it, keeping `mu - r` fixed.
    pub fn with_rate_table(rates: Vec<f64>, mu: Vec<f64>, sigma: DMatrix<f64>, grid: &TimeGrid) -> Result<Self, MarketError> {
        if rates.len() < grid.steps() {
            return Err(MarketError::RateTable { expected: grid.steps(), got: rates.len() });
        }
        let mut m = Self::new(rates[0], mu, sigma)?;
        m.r = ShortRate::Tabulated(rates);
        Ok(m)
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn projector(&self) -> &SubspaceProjector {
        &self.projector
    }

    pub fn n(&self) -> usize {
        self.projector.dim()
    }

    pub fn d(&self) -> usize {
        self.projector.rank()
    }
}

/// Orthogonal volatility of a pricing kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum NuPath {
    Constant(Vec<f64>),
    PerStep(Vec<Vec<f64>>),
}

impl NuPath {
    pub fn at(&self, step: usize) -> &[f64] {
        match self {
            NuPath::Constant(v) => v,
            NuPath::PerStep(v) => &v[step],
        }
    }

    fn len_hint(&self) -> Option<usize> {
        match self {
            NuPath::Constant(_) => None,
            NuPath::PerStep(v) => Some(v.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingKernelPath {
    pub y: Vec<f64>,
    pub nu: NuPath,
}

/// Log-Euler integration of `dY = Y(-r dt + (nu - eta) . dW)`.
pub fn simulate_kernel(
    grid: &TimeGrid,
    market: &MarketModel,
    nu: &NuPath,
    w: &BrownianPath,
    y0: f64,
) -> Result<PricingKernelPath, MarketError> {
    if !(y0 > 0.0) {
        return Err(MarketError::NonpositiveKernel(y0));
    }
    let steps = grid.steps();
    if w.steps() != steps || w.dim() != market.n() {
        return Err(StochasticError::DimensionMismatch { expected: steps, got: w.steps() }.into());
    }
    if let Some(len) = nu.len_hint() {
        if len < steps {
            return Err(StochasticError::DimensionMismatch { expected: steps, got: len }.into());
        }
    }
    let dt = grid.dt();
    let check = |k: usize| -> Result<Vec<f64>, MarketError> {
        let v = nu.at(k);
        let norm = market.projector().range_norm(v);
        if norm > NU_ORTHOGONALITY_TOL {
            return Err(MarketError::NuNotOrthogonal { step: k, norm });
        }
        Ok(v.iter().zip(market.eta()).map(|(a, b)| a - b).collect())
    };
    let mut vol = check(0)?;
    let mut y = Vec::with_capacity(steps + 1);
    let mut log_y = y0.ln();
    y.push(y0);
    for k in 0..steps {
        if k > 0 && matches!(nu, NuPath::PerStep(_)) {
            vol = check(k)?;
        }
        log_y += (-market.r.at(k) - 0.5 * norm_sq(&vol)) * dt + dot(&vol, w.row(k));
        y.push(log_y.exp());
    }
    Ok(PricingKernelPath { y, nu: nu.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_se;
    use crate::stochastic::sample_brownian;

    #[test]
    fn scalar_premium() {
        let eta = risk_premium(&[0.06], 0.02, &DMatrix::from_row_slice(1, 1, &[0.2])).unwrap();
        assert!((eta[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_excess_return() {
        let eta = risk_premium(&[0.03, 0.03], 0.03, &DMatrix::from_row_slice(2, 3, &[0.2, 0.1, 0.0, 0.0, 0.3, 0.1])).unwrap();
        assert!(eta.iter().all(|e| e.abs() < 1e-15));
    }

    #[test]
    fn projected_premium() {
        let eta = risk_premium(&[0.06], 0.02, &DMatrix::from_row_slice(1, 2, &[0.2, 0.0])).unwrap();
        assert!((eta[0] - 0.2).abs() < 1e-12 && eta[1].abs() < 1e-15);
    }

    #[test]
    fn premium_solves_drift_equation() {
        let sigma = DMatrix::from_row_slice(2, 3, &[0.2, 0.05, -0.1, 0.0, 0.25, 0.15]);
        let m = MarketModel::new(0.01, vec![0.05, 0.07], sigma.clone()).unwrap();
        let s_eta = &sigma * DVector::from_column_slice(m.eta());
        assert!((s_eta[0] - 0.04).abs() < 1e-10 && (s_eta[1] - 0.06).abs() < 1e-10);
        assert!(m.projector().perp_norm(m.eta()) < 1e-10);
    }

    #[test]
    fn deterministic_discount() {
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let m = MarketModel::new(0.03, vec![0.03], DMatrix::from_row_slice(1, 1, &[0.2])).unwrap();
        let w = sample_brownian(&g, 1, 1, 0);
        let k = simulate_kernel(&g, &m, &NuPath::Constant(vec![0.0]), &w, 2.0).unwrap();
        assert!((k.y[100] - 2.0 * (-0.03f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn exponential_martingale_mean() {
        let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let m = MarketModel::new(0.0, vec![0.08], DMatrix::from_row_slice(1, 2, &[0.2, 0.0])).unwrap();
        let nu = NuPath::Constant(vec![0.0, 0.15]);
        let ends: Vec<f64> = (0..10_000)
            .map(|p| {
                let w = sample_brownian(&g, 2, 99, p);
                simulate_kernel(&g, &m, &nu, &w, 1.0).unwrap().y[16]
            })
            .collect();
        let s = mean_se(&ends);
        assert!((s.mean - 1.0).abs() < 3.0 * s.se, "{s:?}");
        assert!(ends.iter().all(|y| *y > 0.0));
    }

    #[test]
    fn rejects_hedgeable_nu() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let m = MarketModel::new(0.0, vec![0.08], DMatrix::from_row_slice(1, 2, &[0.2, 0.0])).unwrap();
        let w = sample_brownian(&g, 2, 1, 0);
        let err = simulate_kernel(&g, &m, &NuPath::Constant(vec![0.1, 0.1]), &w, 1.0).unwrap_err();
        assert!(matches!(err, MarketError::NuNotOrthogonal { .. }));
    }
}
