use serde::{Deserialize, Serialize};

use super::PopulationError;
use crate::stochastic::{dot, norm_sq, BrownianPath};

const DIVISIBILITY_TOL: f64 = 1e-9;

/// Age discretization. Bin `i` covers `[i da, (i + 1) da)`; the last bin is
/// absorbing and holds every age at or above `a_max - da`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeGrid {
    pub a_max: f64,
    pub da: f64,
    pub a_e: f64,
    pub a_r: f64,
    bins: usize,
    entry_bin: usize,
    retirement_bin: usize,
}

fn whole_multiple(x: f64, step: f64) -> Option<usize> {
    let k = x / step;
    let r = k.round();
    ((k - r).abs() <= DIVISIBILITY_TOL * r.max(1.0)).then_some(r as usize)
}

impl AgeGrid {
    pub fn new(a_max: f64, da: f64, a_e: f64, a_r: f64) -> Result<Self, PopulationError> {
        if !(da > 0.0 && da.is_finite()) {
            return Err(PopulationError::InvalidAgeGrid(format!("age step must be positive, got {da}")));
        }
        if !(0.0 < a_e && a_e < a_r && a_r < a_max) {
            return Err(PopulationError::InvalidAgeGrid(format!(
                "need 0 < a_e < a_r < a_max, got a_e = {a_e}, a_r = {a_r}, a_max = {a_max}"
            )));
        }
        let multiple = |x: f64, name: &str| {
            whole_multiple(x, da).ok_or_else(|| PopulationError::InvalidAgeGrid(format!("da = {da} does not divide {name} = {x}")))
        };
        let bins = multiple(a_max, "a_max")?;
        let entry_bin = multiple(a_e, "a_e")?;
        let retirement_bin = multiple(a_r, "a_r")?;
        Ok(Self { a_max, da, a_e, a_r, bins, entry_bin, retirement_bin })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn entry_bin(&self) -> usize {
        self.entry_bin
    }

    pub fn retirement_bin(&self) -> usize {
        self.retirement_bin
    }

    pub fn age(&self, bin: usize) -> f64 {
        bin as f64 * self.da
    }

    pub fn bin_of(&self, age: f64) -> usize {
        ((age / self.da + DIVISIBILITY_TOL).floor() as usize).min(self.bins - 1)
    }

    pub fn workers(&self) -> std::ops::Range<usize> {
        self.entry_bin..self.retirement_bin
    }

    pub fn retirees(&self) -> std::ops::Range<usize> {
        self.retirement_bin..self.bins
    }
}

/// Population density per age-year on an [`AgeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDensity(pub Vec<f64>);

impl CohortDensity {
    pub fn total(&self, grid: &AgeGrid) -> f64 {
        crate::stats::pairwise_sum(&self.0) * grid.da
    }

    pub fn mass(&self, grid: &AgeGrid, bins: std::ops::Range<usize>) -> f64 {
        crate::stats::pairwise_sum(&self.0[bins]) * grid.da
    }
}

/// Birth and death rates per age bin at one instant (1/year).
#[derive(Debug, Clone, PartialEq)]
pub struct DemographicRates {
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
}

/// Baseline age profiles the stochastic factors multiply.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRates {
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
}

impl BaselineRates {
    /// Constant death rate and a flat fertility window.
    pub fn flat(grid: &AgeGrid, death: f64, birth: f64, fertile: (f64, f64)) -> Self {
        let birth = (0..grid.bins())
            .map(|i| {
                let a = grid.age(i);
                if a >= fertile.0 - 1e-12 && a < fertile.1 - 1e-12 {
                    birth
                } else {
                    0.0
                }
            })
            .collect();
        Self { birth, death: vec![death; grid.bins()] }
    }

    /// Gompertz mortality `d(a) = A exp(B a)` with a flat fertility window.
    pub fn gompertz(grid: &AgeGrid, a: f64, b: f64, birth: f64, fertile: (f64, f64)) -> Self {
        let mut out = Self::flat(grid, 0.0, birth, fertile);
        out.death = (0..grid.bins()).map(|i| a * (b * grid.age(i)).exp()).collect();
        out
    }
}

/// Geometric, driftless multipliers on the baseline profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemographicFactor {
    pub mortality: f64,
    pub fertility: f64,
}

impl Default for DemographicFactor {
    fn default() -> Self {
        Self { mortality: 1.0, fertility: 1.0 }
    }
}

/// Stochastic rate model: `rate(t, a) = baseline(a) * factor_t`, clamped to
/// `[0, cap]`, with each factor a log-Euler driftless geometric process.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    pub baseline: BaselineRates,
    pub mortality_vol: Vec<f64>,
    pub fertility_vol: Vec<f64>,
    pub death_cap: f64,
    pub birth_cap: f64,
}

impl RateModel {
    pub fn is_deterministic(&self) -> bool {
        self.mortality_vol.iter().chain(&self.fertility_vol).all(|v| *v == 0.0)
    }

    pub fn advance_factor(&self, f: DemographicFactor, dw: &[f64], dt: f64) -> DemographicFactor {
        let step = |x: f64, vol: &[f64]| {
            if vol.iter().all(|v| *v == 0.0) {
                x
            } else {
                x * ((-0.5 * norm_sq(vol)) * dt + dot(vol, dw)).exp()
            }
        };
        DemographicFactor { mortality: step(f.mortality, &self.mortality_vol), fertility: step(f.fertility, &self.fertility_vol) }
    }

    pub fn rates(&self, f: DemographicFactor) -> DemographicRates {
        let clamp = |x: f64, cap: f64| x.clamp(0.0, cap);
        DemographicRates {
            birth: self.baseline.birth.iter().map(|b| clamp(b * f.fertility, self.birth_cap)).collect(),
            death: self.baseline.death.iter().map(|d| clamp(d * f.mortality, self.death_cap)).collect(),
        }
    }

    /// Factor values at every grid point of `w`.
    pub fn factor_path(&self, w: &BrownianPath) -> Vec<DemographicFactor> {
        let mut f = DemographicFactor::default();
        let mut out = Vec::with_capacity(w.steps() + 1);
        out.push(f);
        for k in 0..w.steps() {
            f = self.advance_factor(f, w.row(k), w.dt());
            out.push(f);
        }
        out
    }
}

/// Rates at grid step `step` along the Brownian path `w`.
pub fn sample_rates(model: &RateModel, w: &BrownianPath, step: usize) -> DemographicRates {
    let mut f = DemographicFactor::default();
    for k in 0..step.min(w.steps()) {
        f = model.advance_factor(f, w.row(k), w.dt());
    }
    model.rates(f)
}

/// One step of the McKendrick-von Foerster dynamics along characteristics:
/// every bin ages by `da = dt` with survival `exp(-d dt)`, the newborn bin is
/// the renewal integral, and the last bin absorbs its own survivors.
pub fn evolve_population(
    n: &CohortDensity,
    rates: &DemographicRates,
    grid: &AgeGrid,
    dt: f64,
) -> Result<CohortDensity, PopulationError> {
    if (grid.da - dt).abs() > 1e-12 * dt.max(grid.da) {
        return Err(PopulationError::GridMismatch { da: grid.da, dt });
    }
    let bins = grid.bins();
    for v in [&n.0, &rates.birth, &rates.death] {
        if v.len() != bins {
            return Err(PopulationError::LengthMismatch { expected: bins, got: v.len() });
        }
    }
    let survival: Vec<f64> = rates.death.iter().map(|d| (-d * dt).exp()).collect();
    Ok(CohortDensity(shift_cohorts(&n.0, &rates.birth, &survival, grid.da)))
}

pub(super) fn shift_cohorts(n: &[f64], birth: &[f64], survival: &[f64], da: f64) -> Vec<f64> {
    let bins = n.len();
    let newborns = dot(birth, n) * da;
    let mut out = vec![0.0; bins];
    out[0] = newborns;
    for i in 0..bins - 1 {
        out[i + 1] = n[i] * survival[i];
    }
    out[bins - 1] += n[bins - 1] * survival[bins - 1];
    out
}
