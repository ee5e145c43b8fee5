use serde::{Deserialize, Serialize};

use super::{controls_from_cushion, payout_intensity, step_shift, ControlInputs, FundSetup, PolicyError, ZuEuler, ZuState, ZuStep};
use crate::market::{simulate_kernel, MarketModel, NuPath};
use crate::population::DemographicAggregates;
use crate::stochastic::{axpy, dot, norm_sq, BrownianPath, StochasticError, TimeGrid};
use crate::utility::PensionWeight;

/// Which grid points a simulation keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordPlan {
    All,
    /// Sorted step indices.
    Steps(Vec<usize>),
}

impl RecordPlan {
    fn wants(&self, k: usize) -> bool {
        match self {
            RecordPlan::All => true,
            RecordPlan::Steps(s) => s.binary_search(&k).is_ok(),
        }
    }
}

/// Feedback strategy relative to the optimum: the cushion exposure is
/// scaled by `pi_scale` and the pension excess over the floor by
/// `rho_scale`. Both keep the cushion geometric and hence positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub pi_scale: f64,
    pub rho_scale: f64,
}

impl Strategy {
    pub const OPTIMAL: Strategy = Strategy { pi_scale: 1.0, rho_scale: 1.0 };

    pub fn over_investment(eps: f64) -> Self {
        Strategy { pi_scale: 1.0 + eps, rho_scale: 1.0 }
    }

    pub fn is_optimal(&self) -> bool {
        *self == Self::OPTIMAL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundRecord {
    pub step: usize,
    pub t: f64,
    pub f_star: f64,
    pub x: f64,
    pub cushion: f64,
    pub zu: f64,
    pub rho_star: f64,
    pub pi_star: Vec<f64>,
    pub p_min: f64,
    pub c: f64,
    pub n_r: f64,
    pub n_w: f64,
    /// Marginal utility of the fund, `U_z(t, F*_t)`.
    pub y: f64,
    /// `U(t, F_t) + int_0^t V(s, rho_s) ds`.
    pub preference: f64,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundPath {
    pub path_id: u64,
    pub records: Vec<FundRecord>,
    pub tau_z: Option<f64>,
    /// Smallest cushion over the grid points before `tau_z`.
    pub min_cushion: f64,
    pub min_rho_excess: f64,
    /// Grid points before `tau_z` with a nonpositive cushion or `rho < 1`.
    pub violations: usize,
}

fn check_demography(grid: &TimeGrid, demo: &[DemographicAggregates], w: &BrownianPath, n: usize) -> Result<(), PolicyError> {
    if demo.len() != grid.steps() + 1 {
        return Err(PolicyError::DemographyLength { expected: grid.steps() + 1, got: demo.len() });
    }
    if w.steps() != grid.steps() || w.dim() != n {
        return Err(StochasticError::DimensionMismatch { expected: grid.steps(), got: w.steps() }.into());
    }
    Ok(())
}

/// Simulates the fund under `strategy` with the cushion in multiplicative
/// form, `dG = G[(r - rho_scale kappa) dt + (pi_scale / theta) a . (dW + eta dt)]`,
/// and `F = X + G`.
pub fn simulate_optimal_fund(
    setup: &FundSetup,
    market: &MarketModel,
    grid: &TimeGrid,
    demo: &[DemographicAggregates],
    w: &BrownianPath,
    strategy: Strategy,
    plan: &RecordPlan,
) -> Result<FundPath, PolicyError> {
    setup.check(market)?;
    check_demography(grid, demo, w, market.n())?;
    let th = setup.theta;
    let a = setup.exposure(market);
    let a_sq = norm_sq(&a);
    let eta = market.eta();
    let lam = strategy.pi_scale / th;
    let geometric_drift = lam * dot(&a, eta) - 0.5 * lam * lam * a_sq;
    let dt = grid.dt();

    let mut g = setup.f0 - setup.x0;
    let mut x = setup.x0;
    let mut explicit = ZuState::new(setup.zu0, th);
    let mut logeuler = ZuEuler::new(setup.zu0, th);
    let perturbed = setup.zu_drift_perturbation != 0.0;
    let mut z = setup.z.z0;
    let mut integral = 0.0;
    let mut tau = None;
    let mut path = FundPath {
        path_id: w.path_id,
        records: Vec::new(),
        tau_z: None,
        min_cushion: f64::INFINITY,
        min_rho_excess: f64::INFINITY,
        violations: 0,
    };

    for k in 0..=grid.steps() {
        let agg = &demo[k];
        let zu = if perturbed { logeuler.zu } else { explicit.zu };
        let wt = z * PensionWeight::from_aggregates(&setup.rule, agg).factor(th);
        let stopped = tau.is_some();
        let phi = payout_intensity(th, wt, agg.p_min_total)?;
        let (kappa, rho_excess) = if stopped || phi == 0.0 {
            (0.0, 0.0)
        } else {
            let kappa = phi * zu.powf(-1.0 / th);
            (kappa, strategy.rho_scale * g * kappa / agg.p_min_total)
        };
        let pi = axpy(lam * g, &a, &setup.delta_x);
        let u = zu * g.powf(1.0 - th) / (1.0 - th);
        let v = if wt > 0.0 && rho_excess > 0.0 { wt * rho_excess.powf(1.0 - th) / (1.0 - th) } else { 0.0 };
        if !stopped {
            path.min_cushion = path.min_cushion.min(g);
            path.min_rho_excess = path.min_rho_excess.min(rho_excess);
            if !(g > 0.0 && g.is_finite()) || rho_excess < 0.0 {
                path.violations += 1;
            }
        }
        if plan.wants(k) {
            path.records.push(FundRecord {
                step: k,
                t: grid.time(k),
                f_star: x + g,
                x,
                cushion: g,
                zu,
                rho_star: 1.0 + rho_excess,
                pi_star: pi,
                p_min: agg.p_min_total,
                c: agg.c,
                n_r: agg.n_r,
                n_w: agg.n_w,
                y: zu * g.powf(-th),
                preference: u + integral,
                stopped,
            });
        }
        if k == grid.steps() || stopped {
            continue;
        }
        let dw = w.row(k);
        let r = market.r.at(k);
        let zs = ZuStep { r, a_sq, delta: &setup.delta, phi };
        let t = grid.time(k);
        if perturbed {
            logeuler.step_log(&zs, setup.zu_drift_perturbation, dw, t, dt)?;
            tau = logeuler.tau;
        } else {
            explicit.advance(&zs, dw, t, dt)?;
            tau = explicit.tau;
        }
        if tau.is_some() {
            // frozen at the last state before the crossing
            if perturbed {
                logeuler.zu = zu;
            } else {
                explicit.zu = zu;
            }
            continue;
        }
        integral += v * dt;
        x = step_shift(x, &setup.delta_x, r, agg.c, agg.p_min_total, eta, dw, dt);
        g *= ((r - strategy.rho_scale * kappa + geometric_drift) * dt + lam * dot(&a, dw)).exp();
        z = setup.z.step(z, dw, dt);
    }
    path.tau_z = tau;
    Ok(path)
}

/// Fund, shift and coefficient along the primitive budget equation, every
/// grid point up to the stop.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPath {
    pub f: Vec<f64>,
    pub x: Vec<f64>,
    pub zu: Vec<f64>,
    pub tau_z: Option<f64>,
}

/// Additive Euler integration of `dF = (F r + C - rho P^min) dt + pi . (dW + eta dt)`
/// and of the shift, with the closed-form feedback controls evaluated at the
/// simulated state.
pub fn simulate_budget_fund(
    setup: &FundSetup,
    market: &MarketModel,
    grid: &TimeGrid,
    demo: &[DemographicAggregates],
    w: &BrownianPath,
) -> Result<BudgetPath, PolicyError> {
    setup.check(market)?;
    check_demography(grid, demo, w, market.n())?;
    let th = setup.theta;
    let a = setup.exposure(market);
    let a_sq = norm_sq(&a);
    let eta = market.eta();
    let dt = grid.dt();
    let (mut f, mut x, mut z) = (setup.f0, setup.x0, setup.z.z0);
    let mut zu = ZuState::new(setup.zu0, th);
    let mut out = BudgetPath { f: vec![f], x: vec![x], zu: vec![zu.zu], tau_z: None };
    for k in 0..grid.steps() {
        let agg = &demo[k];
        let g = f - x;
        if !(g > 0.0) {
            return Err(PolicyError::NonpositiveCushion { step: k });
        }
        let wt = z * PensionWeight::from_aggregates(&setup.rule, agg).factor(th);
        let inp = ControlInputs { theta: th, x, zu: zu.zu, w: wt, p_min: agg.p_min_total, a: &a, delta_x: &setup.delta_x };
        let c = controls_from_cushion(g, &inp)?;
        let dw = w.row(k);
        let r = market.r.at(k);
        let phi = payout_intensity(th, wt, agg.p_min_total)?;
        zu.advance(&ZuStep { r, a_sq, delta: &setup.delta, phi }, dw, grid.time(k), dt)?;
        if zu.stopped() {
            out.tau_z = zu.tau;
            break;
        }
        f += (f * r + agg.c - c.rho * agg.p_min_total + dot(&c.pi, eta)) * dt + dot(&c.pi, dw);
        x = step_shift(x, &setup.delta_x, r, agg.c, agg.p_min_total, eta, dw, dt);
        z = setup.z.step(z, dw, dt);
        out.f.push(f);
        out.x.push(x);
        out.zu.push(zu.zu);
    }
    Ok(out)
}

/// Pathwise max relative error of `G (Zu)^{-1/theta}` against
/// `G_0 Zu_0^{-1/theta} Y^{-1/theta}`, with `Y` the kernel of orthogonal
/// volatility `delta^perp` simulated on the same increments.
pub fn kernel_identity_error(
    path: &BudgetPath,
    setup: &FundSetup,
    market: &MarketModel,
    grid: &TimeGrid,
    w: &BrownianPath,
) -> Result<f64, PolicyError> {
    let th = setup.theta;
    let kernel = simulate_kernel(grid, market, &NuPath::Constant(setup.delta_perp(market)), w, 1.0)?;
    let base = (path.f[0] - path.x[0]) * path.zu[0].powf(-1.0 / th);
    let mut err: f64 = 0.0;
    for k in 0..path.f.len() {
        let lhs = (path.f[k] - path.x[k]) * path.zu[k].powf(-1.0 / th);
        let rhs = base * kernel.y[k].powf(-1.0 / th);
        err = err.max((lhs / rhs - 1.0).abs());
    }
    Ok(err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelResidualReport {
    pub max_relative: f64,
    pub mean_relative: f64,
    pub steps: usize,
}

/// One-step residual of `U_z(t, F*_t)` against the Euler increment of
/// `dU_z = -U_z r dt + U_z (delta^perp - eta) . dW`, relative to `U_z`.
pub fn marginal_kernel_path(
    path: &FundPath,
    setup: &FundSetup,
    market: &MarketModel,
    w: &BrownianPath,
) -> Result<KernelResidualReport, PolicyError> {
    let vol: Vec<f64> = setup.delta_perp(market).iter().zip(market.eta()).map(|(d, e)| d - e).collect();
    let recs: Vec<&FundRecord> = path.records.iter().take_while(|r| !r.stopped).collect();
    if recs.iter().enumerate().any(|(i, r)| r.step != i) {
        return Err(PolicyError::NotFullyRecorded);
    }
    let dt = w.dt();
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let steps = recs.len().saturating_sub(1);
    for k in 0..steps {
        let y = recs[k].y;
        let predicted = y * (-market.r.at(k) * dt + dot(&vol, w.row(k)));
        let res = ((recs[k + 1].y - y - predicted) / y).abs();
        max = max.max(res);
        sum += res;
    }
    Ok(KernelResidualReport { max_relative: max, mean_relative: if steps > 0 { sum / steps as f64 } else { 0.0 }, steps })
}
