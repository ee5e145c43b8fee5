use super::cohort::shift_cohorts;
use super::{
    aggregates, AgeGrid, CohortDensity, DemographicAggregates, DemographicFactor, PensionRule, PopulationError,
    RateModel, WageModel,
};
use crate::market::ShortRate;
use crate::stochastic::{BrownianPath, TimeGrid};

/// Everything needed to run the population forward and produce aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    pub grid: AgeGrid,
    pub rates: RateModel,
    pub wages: WageModel,
    pub alpha_c: f64,
    pub rule: PensionRule,
    pub theta: f64,
    pub initial: CohortDensity,
}

/// Per-bin state carried along characteristics: density, accrued
/// contributions `c_t(a)` and (for age-dependent rules) floors `p^min_t(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub t: f64,
    pub density: CohortDensity,
    pub factor: DemographicFactor,
    pub past: Vec<f64>,
    pub floors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrajectory {
    /// One entry per time-grid point.
    pub aggregates: Vec<DemographicAggregates>,
    /// Full states at the requested steps, in request order.
    pub snapshots: Vec<(usize, PopulationState)>,
}

impl PopulationModel {
    fn retirement_base(&self, c_at_retirement: f64) -> f64 {
        match self.rule {
            PensionRule::Example1 { p_min } => p_min,
            PensionRule::Example2 { p_ret: Some(p), .. } => p,
            PensionRule::Example2 { alpha_p, p_ret: None, .. } => alpha_p * c_at_retirement / (self.grid.a_r - self.grid.a_e),
        }
    }

    fn lambda(&self) -> f64 {
        match self.rule {
            PensionRule::Example2 { lambda, .. } => lambda,
            PensionRule::Example1 { .. } => 0.0,
        }
    }

    fn has_floors(&self) -> bool {
        matches!(self.rule, PensionRule::Example2 { .. })
    }

    /// State at `t0` under a stationary history: every living cohort has
    /// earned the current wage and rate over its whole past.
    pub fn initial_state(&self, t0: f64, r0: f64) -> Result<PopulationState, PopulationError> {
        let g = &self.grid;
        let bins = g.bins();
        if self.initial.0.len() != bins {
            return Err(PopulationError::LengthMismatch { expected: bins, got: self.initial.0.len() });
        }
        if let Some(bin) = self.initial.0.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(PopulationError::InvalidAgeGrid(format!("initial density at bin {bin} is negative or non-finite")));
        }
        let growth = (r0 * g.da).exp();
        let wage = self.wages.wage(t0, 0.0);
        let mut past = vec![0.0; bins];
        for i in g.entry_bin()..bins - 1 {
            let earned = if i < g.retirement_bin() { wage * g.da } else { 0.0 };
            past[i + 1] = growth * (past[i] + earned);
        }
        let mut floors = Vec::new();
        if self.has_floors() {
            floors = vec![0.0; bins];
            let index = (self.lambda() * g.da).exp();
            floors[g.retirement_bin()] = self.retirement_base(past[g.retirement_bin()]);
            for i in g.retirement_bin()..bins - 1 {
                floors[i + 1] = floors[i] * index;
            }
        }
        Ok(PopulationState { t: t0, density: self.initial.clone(), factor: DemographicFactor::default(), past, floors })
    }

    /// Advances one step of length `dt = da`, compounding contributions at
    /// the short rate `r` over the step.
    pub fn step(&self, state: &mut PopulationState, survival: &[f64], birth: &[f64], r: f64) {
        let g = &self.grid;
        let bins = g.bins();
        let n = &state.density.0;
        let last = bins - 1;
        let incoming = n[last - 1] * survival[last - 1];
        let staying = n[last] * survival[last];
        let mix = |from: f64, own: f64| {
            if incoming + staying > 0.0 {
                (incoming * from + staying * own) / (incoming + staying)
            } else {
                own
            }
        };

        let growth = (r * g.da).exp();
        let wage = self.wages.wage(state.t, 0.0);
        let contrib = |i: usize| if g.workers().contains(&i) { wage * g.da } else { 0.0 };
        let past = &mut state.past;
        let tail = mix(growth * (past[last - 1] + contrib(last - 1)), growth * past[last]);
        for i in (0..last).rev() {
            past[i + 1] = if i + 1 > g.entry_bin() { growth * (past[i] + contrib(i)) } else { 0.0 };
        }
        past[last] = tail;
        past[0] = 0.0;

        if self.has_floors() {
            let index = (self.lambda() * g.da).exp();
            let f = &mut state.floors;
            let tail = mix(f[last - 1] * index, f[last] * index);
            for i in (g.retirement_bin()..last).rev() {
                f[i + 1] = f[i] * index;
            }
            f[last] = tail;
            f[g.retirement_bin()] = self.retirement_base(past[g.retirement_bin()]);
        }

        state.density = CohortDensity(shift_cohorts(n, birth, survival, g.da));
        state.t += g.da;
    }

    pub fn aggregates(&self, state: &PopulationState) -> Result<DemographicAggregates, PopulationError> {
        let wages = vec![self.wages.wage(state.t, 0.0); self.grid.bins()];
        aggregates(&state.density, &self.grid, &wages, self.alpha_c, &self.rule, &state.past, &state.floors, self.theta)
    }

    /// Runs the population over `grid`. With `w = None` the demographic
    /// factors stay at 1 (deterministic rates, shareable across paths).
    pub fn run(
        &self,
        grid: &TimeGrid,
        rate: &ShortRate,
        w: Option<&BrownianPath>,
        snapshot_steps: &[usize],
    ) -> Result<PopulationTrajectory, PopulationError> {
        let dt = grid.dt();
        if (self.grid.da - dt).abs() > 1e-12 * dt.max(self.grid.da) {
            return Err(PopulationError::GridMismatch { da: self.grid.da, dt });
        }
        let mut state = self.initial_state(grid.t0(), rate.at(0))?;
        let stochastic = w.is_some() && !self.rates.is_deterministic();
        let mut rates = self.rates.rates(state.factor);
        let mut survival: Vec<f64> = rates.death.iter().map(|d| (-d * dt).exp()).collect();

        let mut out = PopulationTrajectory { aggregates: Vec::with_capacity(grid.steps() + 1), snapshots: Vec::new() };
        let snap = |k: usize, s: &PopulationState, out: &mut PopulationTrajectory| {
            for &j in snapshot_steps {
                if j == k {
                    out.snapshots.push((k, s.clone()));
                }
            }
        };
        out.aggregates.push(self.aggregates(&state)?);
        snap(0, &state, &mut out);
        for k in 0..grid.steps() {
            if stochastic {
                rates = self.rates.rates(state.factor);
                survival = rates.death.iter().map(|d| (-d * dt).exp()).collect();
            }
            self.step(&mut state, &survival, &rates.birth, rate.at(k));
            state.t = grid.time(k + 1);
            if let (true, Some(w)) = (stochastic, w) {
                state.factor = self.rates.advance_factor(state.factor, w.row(k), dt);
            }
            out.aggregates.push(self.aggregates(&state)?);
            snap(k + 1, &state, &mut out);
        }
        out.snapshots.sort_by_key(|(k, _)| snapshot_steps.iter().position(|j| j == k));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{past_contribution, pension_floor, BaselineRates, StationaryHistory};

    fn model(rule: PensionRule) -> PopulationModel {
        let grid = AgeGrid::new(100.0, 0.5, 20.0, 60.0).unwrap();
        PopulationModel {
            grid,
            rates: RateModel {
                baseline: BaselineRates::gompertz(&grid, 1e-4, 0.08, 0.06, (20.0, 40.0)),
                mortality_vol: vec![0.0],
                fertility_vol: vec![0.0],
                death_cap: 10.0,
                birth_cap: 1.0,
            },
            wages: WageModel { level: 1.0, growth: 0.0, t0: 0.0 },
            alpha_c: 0.2,
            rule,
            theta: 0.5,
            initial: CohortDensity(vec![1.0; grid.bins()]),
        }
    }

    #[test]
    fn recursion_matches_direct_quadrature() {
        let rule = PensionRule::Example2 { alpha_p: 0.6, lambda: 0.01, p_ret: None };
        let m = model(rule);
        let r = 0.03;
        let tg = TimeGrid::new(0.0, 10.0, 20).unwrap();
        let traj = m.run(&tg, &ShortRate::Constant(r), None, &[0, 20]).unwrap();
        let h = StationaryHistory { wages: m.wages, rate: r, lambda: 0.01, start: -200.0 };
        for (k, s) in &traj.snapshots {
            let t = tg.time(*k);
            for i in (m.grid.entry_bin()..m.grid.bins() - 1).step_by(7) {
                let a = m.grid.age(i);
                let c = past_contribution(a, t, &m.grid, 0.5, &h).unwrap();
                assert!((s.past[i] - c).abs() <= 1e-10 * c.max(1.0), "c at a={a}, t={t}: {} vs {c}", s.past[i]);
                let p = pension_floor(&rule, t, a, &m.grid, 0.5, &h).unwrap();
                assert!((s.floors[i] - p).abs() <= 1e-10 * p.max(1.0), "p at a={a}: {} vs {p}", s.floors[i]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_grid() {
        let m = model(PensionRule::Example1 { p_min: 1.0 });
        let tg = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert!(matches!(m.run(&tg, &ShortRate::Constant(0.0), None, &[]), Err(PopulationError::GridMismatch { .. })));
    }
}
