//! Wage, rate and indexation histories, including the pre-`t0` extrapolation
//! needed for accrued contributions, and the direct quadratures for `c_t(a)`
//! and `p^min_t(a)`.

use super::{AgeGrid, PensionRule, PopulationError};

/// Wages flat in age, growing at a constant rate after `t0` and frozen at the
/// `t0` level before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WageModel {
    pub level: f64,
    pub growth: f64,
    pub t0: f64,
}

impl WageModel {
    pub fn wage(&self, t: f64, _age: f64) -> f64 {
        self.level * (self.growth * (t - self.t0).max(0.0)).exp()
    }
}

pub trait History {
    fn wage(&self, t: f64, age: f64) -> f64;
    fn rate(&self, t: f64) -> f64;
    fn indexation(&self, t: f64) -> f64;
    /// Earliest time with available data.
    fn start(&self) -> f64;
}

/// History that holds every input at its `t0` value for `t < t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryHistory {
    pub wages: WageModel,
    pub rate: f64,
    pub lambda: f64,
    pub start: f64,
}

impl History for StationaryHistory {
    fn wage(&self, t: f64, age: f64) -> f64 {
        self.wages.wage(t, age)
    }

    fn rate(&self, _t: f64) -> f64 {
        self.rate
    }

    fn indexation(&self, _t: f64) -> f64 {
        self.lambda
    }

    fn start(&self) -> f64 {
        self.start
    }
}

fn steps_between(a: f64, b: f64, du: f64) -> usize {
    ((b - a) / du).round().max(0.0) as usize
}

/// Present value at `t` of the wages earned by an individual aged `a`:
/// left-Riemann sum with step `du` of `exp(int_u^t r) e_u(a + u - t)` over
/// the working window `[t - a + a_e, min(t, t - a + a_r))`.
pub fn past_contribution(a: f64, t: f64, grid: &AgeGrid, du: f64, history: &impl History) -> Result<f64, PopulationError> {
    if a < grid.a_e - 1e-12 {
        return Err(PopulationError::AgeBelowEntry { age: a, entry: grid.a_e });
    }
    let u_lo = t - a + grid.a_e;
    if u_lo < history.start() - 1e-9 {
        return Err(PopulationError::MissingHistory { date: u_lo, start: history.start() });
    }
    let total = steps_between(u_lo, t, du);
    let working = steps_between(u_lo, t.min(t - a + grid.a_r), du);
    // suffix sums of r du give int_{u_j}^t r
    let mut acc = 0.0;
    let mut discount = vec![0.0; total + 1];
    for l in (0..total).rev() {
        acc += history.rate(u_lo + l as f64 * du) * du;
        discount[l] = acc;
    }
    let mut c = 0.0;
    for j in 0..working {
        let u = u_lo + j as f64 * du;
        c += discount[j].exp() * history.wage(u, a + u - t) * du;
    }
    Ok(c)
}

/// Guaranteed floor of a pensioner aged `a` at `t`. Non-pensioners get 0.
pub fn pension_floor(
    rule: &PensionRule,
    t: f64,
    a: f64,
    grid: &AgeGrid,
    du: f64,
    history: &impl History,
) -> Result<f64, PopulationError> {
    match *rule {
        PensionRule::Example1 { p_min } => Ok(p_min),
        PensionRule::Example2 { alpha_p, p_ret, .. } => {
            if a < grid.a_r - 1e-12 {
                return Ok(0.0);
            }
            let s = grid.a_r + t - a;
            if s < history.start() - 1e-9 {
                return Err(PopulationError::MissingHistory { date: s, start: history.start() });
            }
            let base = match p_ret {
                Some(p) => p,
                None => alpha_p * past_contribution(grid.a_r, s, grid, du, history)? / (grid.a_r - grid.a_e),
            };
            let n = steps_between(s, t, du);
            let growth: f64 = (0..n).map(|l| history.indexation(s + l as f64 * du) * du).sum();
            Ok(base * growth.exp())
        }
    }
}
