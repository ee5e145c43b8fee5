//! Named verification suites run against a validated scenario.

use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::oracle::{argmax_oracle, OracleState};
use super::{
    convergence_study, martingale_test, supermartingale_test, PreferencePath, TestReport, VerifyError, DETERMINISTIC_BAND,
    STRONG_BAND,
};
use crate::engine::{brownian_path, demography, simulate_paths};
use crate::population::DemographicAggregates;
use crate::policy::{
    boundary_limits_probe, consistency_drift, kernel_identity_error, optimal_controls, payout_intensity, simulate_budget_fund,
    simulate_optimal_fund, ControlInputs, RecordPlan, Strategy, ZuEuler, ZuState, ZuStep,
};
use crate::scenario::{BirthSpec, InitialSpec, MortalitySpec, ScenarioConfig, ValidatedScenario};
use crate::stats::mean_se;
use crate::stochastic::{dot, norm_sq, BrownianPath};
use crate::utility::{
    crra_characteristics, hjb_drift_residual, CrraFundUtility, HjbInputs, PensionWeight, PensionersUtility, ShiftDynamics,
    ZuDynamics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Martingale,
    Supermartingale,
    Argmax,
    KernelIdentity,
    BoundaryLimits,
    Convergence,
    PopulationOracle,
    Hjb,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Martingale,
        Suite::Supermartingale,
        Suite::Argmax,
        Suite::KernelIdentity,
        Suite::BoundaryLimits,
        Suite::Convergence,
        Suite::PopulationOracle,
        Suite::Hjb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Martingale => "martingale",
            Suite::Supermartingale => "supermartingale",
            Suite::Argmax => "argmax",
            Suite::KernelIdentity => "kernel-identity",
            Suite::BoundaryLimits => "boundary-limits",
            Suite::Convergence => "convergence",
            Suite::PopulationOracle => "population-oracle",
            Suite::Hjb => "hjb",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| format!("unknown suite '{s}' (known: {})", Suite::ALL.map(|x| x.name()).join(", ")))
    }
}

/// Sizes of the individual suites.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Martingale paths; `None` uses the scenario's `mc.paths`.
    pub paths: Option<usize>,
    /// Paths per level in the convergence studies.
    pub convergence_paths: usize,
    /// Relative over-investment of the perturbed strategy.
    pub over_investment: f64,
    pub oracle_states: usize,
    /// Relative perturbation of the coefficient drift in the HJB check.
    pub hjb_perturbation: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { paths: None, convergence_paths: 400, over_investment: 0.5, oracle_states: 100, hjb_perturbation: 0.01 }
    }
}

pub fn run_suite(scn: &ValidatedScenario, suite: Suite, opts: &SuiteOptions) -> Result<Vec<TestReport>, VerifyError> {
    let start = Instant::now();
    let mut reports = match suite {
        Suite::Martingale => martingale_suite(scn, opts),
        Suite::Supermartingale => supermartingale_suite(scn, opts),
        Suite::Argmax => argmax_suite(scn, opts),
        Suite::KernelIdentity => kernel_identity_suite(scn, opts),
        Suite::BoundaryLimits => boundary_suite(scn),
        Suite::Convergence => convergence_suite(scn, opts),
        Suite::PopulationOracle => population_suite(scn),
        Suite::Hjb => hjb_suite(scn, opts),
    }?;
    let runtime = start.elapsed().as_secs_f64();
    for r in &mut reports {
        r.runtime_s = runtime;
    }
    Ok(reports)
}

fn variant(scn: &ValidatedScenario, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<ValidatedScenario, VerifyError> {
    let mut c = scn.config.clone();
    edit(&mut c);
    ValidatedScenario::from_config(c).map_err(|errs| {
        VerifyError::Scenario(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
    })
}

fn checkpoint_plan(scn: &ValidatedScenario) -> RecordPlan {
    let mut steps = vec![0];
    steps.extend(scn.checkpoint_steps.iter().copied().filter(|k| *k > 0));
    if steps.len() == 1 {
        steps.push(scn.grid.steps());
    }
    RecordPlan::Steps(steps)
}

fn preference_paths(scn: &ValidatedScenario, paths: usize, strategy: Strategy) -> Result<Vec<PreferencePath>, VerifyError> {
    let plan = checkpoint_plan(scn);
    Ok(simulate_paths(scn, paths, strategy, &plan)?.iter().map(|p| PreferencePath::from_fund(p, strategy)).collect())
}

fn martingale_suite(scn: &ValidatedScenario, opts: &SuiteOptions) -> Result<Vec<TestReport>, VerifyError> {
    let paths = opts.paths.unwrap_or(scn.config.mc.paths);
    martingale_test(&preference_paths(scn, paths, Strategy::OPTIMAL)?, scn.grid.dt())
}

fn tagged(mut reports: Vec<TestReport>, tag: &str) -> Vec<TestReport> {
    for r in &mut reports {
        r.name = format!("{}[{tag}]", r.name);
    }
    reports
}

fn supermartingale_suite(scn: &ValidatedScenario, opts: &SuiteOptions) -> Result<Vec<TestReport>, VerifyError> {
    let paths = opts.paths.unwrap_or(scn.config.mc.paths);
    let dt = scn.grid.dt();
    let optimal = preference_paths(scn, paths, Strategy::OPTIMAL)?;
    let over = Strategy::over_investment(opts.over_investment);
    let mut out = tagged(supermartingale_test(&preference_paths(scn, paths, over)?, &optimal, true, dt)?, "over-investment");
    let floor_only = Strategy { pi_scale: 1.0, rho_scale: 0.0 };
    out.extend(tagged(supermartingale_test(&preference_paths(scn, paths, floor_only)?, &optimal, false, dt)?, "floor-only"));
    Ok(out)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + (hi - lo) * u
}

fn initial_aggregates(scn: &ValidatedScenario) -> Result<DemographicAggregates, VerifyError> {
    let state = scn.population.initial_state(scn.grid.t0(), scn.market.r.at(0)).map_err(crate::engine::EngineError::from)?;
    Ok(scn.population.aggregates(&state).map_err(crate::engine::EngineError::from)?)
}

fn argmax_suite(scn: &ValidatedScenario, opts: &SuiteOptions) -> Result<Vec<TestReport>, VerifyError> {
    let s = &scn.setup;
    let th = s.theta;
    let agg = initial_aggregates(scn)?;
    let a = s.exposure(&scn.market);
    let factor = PensionWeight::from_aggregates(&s.rule, &agg).factor(th);
    let mut rng = ChaCha8Rng::seed_from_u64(scn.config.mc.seed ^ 0x6172_676d_6178);
    let (mut worst_pi, mut worst_rho): (f64, f64) = (0.0, 0.0);
    for _ in 0..opts.oracle_states {
        let g = uniform(&mut rng, (0.05f64).ln(), (50.0f64).ln()).exp();
        let zu = uniform(&mut rng, (0.25f64).ln(), (4.0f64).ln()).exp();
        let x = uniform(&mut rng, -5.0, 5.0);
        let weight = s.z.z0.max(1e-12) * uniform(&mut rng, 0.5, 2.0) * factor;
        let z = x + g;
        let u = CrraFundUtility::new(th, zu, x)?;
        let v = PensionersUtility::from_weight(th, weight)?;
        let b = consistency_drift(th, scn.market.r.at(0), norm_sq(&a), 0.0);
        let ch = crra_characteristics(
            &u,
            &ShiftDynamics { mu_x: 0.0, delta_x: s.delta_x.clone() },
            &ZuDynamics { b, delta: s.delta.clone() },
            z,
        )?;
        let st = OracleState {
            u: &u,
            v: &v,
            z,
            p_min: agg.p_min_total,
            gamma_z: &ch.gamma_z,
            eta: scn.market.eta(),
            projector: scn.market.projector(),
        };
        let res = argmax_oracle(&st)?;
        let inp = ControlInputs { theta: th, x, zu, w: weight, p_min: agg.p_min_total, a: &a, delta_x: &s.delta_x };
        let c = optimal_controls(z, &inp)?;
        let proj = scn.market.projector();
        let pi_dev = res.normalized_deviation(proj, &c.pi, res.rho, 2.0);
        let rho_dev = (res.rho - c.rho).abs() / (2.0 * res.rho_step);
        worst_pi = worst_pi.max(pi_dev);
        worst_rho = worst_rho.max(rho_dev);
    }
    let n = opts.oracle_states;
    let mk = |name: &str, dev: f64| {
        let mut r = TestReport::two_sided(name, "max |oracle - closed form| in units of 2 grid steps", dev, 0.0, 1.0);
        r.paths = n;
        r.with_detail(format!("{n} random states"))
    };
    Ok(vec![mk("argmax.pi", worst_pi), mk("argmax.rho", worst_rho)])
}

/// Levels `steps/4, steps/2, steps`, each driven by the fine increments.
fn levels(scn: &ValidatedScenario) -> Result<Vec<(usize, ValidatedScenario)>, VerifyError> {
    let steps = scn.grid.steps();
    if !steps.is_multiple_of(4) {
        return Err(VerifyError::InsufficientLevels(vec![scn.grid.dt()]));
    }
    [4usize, 2, 1].into_iter().map(|f| Ok((f, variant(scn, |c| c.time.steps = steps / f)?))).collect()
}

fn level_demography(level: &ValidatedScenario, w: &BrownianPath) -> Result<Vec<DemographicAggregates>, VerifyError> {
    Ok(demography(level, Some(w), &[])?.aggregates)
}

/// Mean over paths of a pathwise error at the three levels.
fn level_errors(
    scn: &ValidatedScenario,
    paths: usize,
    err: impl Fn(&ValidatedScenario, &[DemographicAggregates], &BrownianPath) -> Result<f64, VerifyError> + Sync,
) -> Result<(Vec<f64>, Vec<f64>), VerifyError> {
    use rayon::prelude::*;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for (f, level) in levels(scn)? {
        let shared = if level.shared_demography() { Some(demography(&level, None, &[])?.aggregates) } else { None };
        let e: Vec<f64> = (0..paths as u64)
            .into_par_iter()
            .map(|id| {
                let w = brownian_path(scn, id).coarsen(f).map_err(crate::policy::PolicyError::from)?;
                match &shared {
                    Some(d) => err(&level, d, &w),
                    None => err(&level, &level_demography(&level, &w)?, &w),
                }
            })
            .collect::<Result<_, VerifyError>>()?;
        dts.push(level.grid.dt());
        errs.push(mean_se(&e).mean);
    }
    Ok((dts, errs))
}

fn kernel_identity_suite(scn: &ValidatedScenario, opts: &SuiteOptions) -> Result<Vec<TestReport>, VerifyError> {
    let (dts, errs) = level_errors(scn, opts.convergence_paths, |s, demo, w| {
        let b = simulate_budget_fund(&s.setup, &s.market, &s.grid, demo, w)?;
        Ok(kernel_identity_error(&b, &s.setup, &s.market, &s.grid, w)?)
    })?;
    let mut r = convergence_study("kernel-identity", &dts, &errs, STRONG_BAND)?.to_report();
    r.paths = opts.convergence_paths;
    Ok(vec![r])
}

/// Pathwise max relative gap between the additive Euler scheme and the
/// explicit representation of the coefficient.
fn zu_scheme_error(s: &ValidatedScenario, demo: &[DemographicAggregates], w: &BrownianPath) -> Result<f64, VerifyError> {
    let th = s.setup.theta;
    let a_sq = norm_sq(&s.setup.exposure(&s.market));
    let dt = s.grid.dt();
    let mut explicit = ZuState::new(s.setup.zu0, th);
    let mut euler = ZuEuler::new(s.setup.zu0, th);
    let mut z = s.setup.z.z0;
    let mut err: f64 = 0.0;
    for k in 0..s.grid.steps() {
        let agg = &demo[k];
        let wt = z * PensionWeight::from_aggregates(&s.setup.rule, agg).factor(th);
        let phi = payout_intensity(th, wt, agg.p_min_total)?;
        let st = ZuStep { r: s.market.r.at(k), a_sq, delta: &s.setup.delta, phi };
        let t = s.grid.time(k);
        explicit.advance(&st, w.row(k), t, dt)?;
        euler.step(&st, w.row(k), t, dt)?;
        if explicit.stopped() || euler.tau.is_some() {
            break;
        }
        z = s.setup.z.step(z, w.row(k), dt);
        err = err.max((euler.zu / explicit.zu - 1.0).abs());
    }
    Ok(err)
}

/// Constant-coefficient scenario without noise or market premium, with the
/// initial coefficient chosen so the accrual exhausts it at one year.
pub fn unit_stopping_scenario(scn: &ValidatedScenario) -> Result<ValidatedScenario, VerifyError> {
    let per_year = (scn.grid.steps() as f64 / (scn.grid.t1() - scn.grid.t0())).round() as usize;
    let zero = vec![0.0; scn.market.n()];
    let quiet = variant(scn, |c| {
        c.time.t1 = c.time.t0 + 2.0;
        c.time.steps = 2 * per_year;
        c.market.r = 0.0;
        c.market.mu = vec![0.0; c.market.mu.len()];
        c.zu.delta = zero.clone();
        c.zu.drift_perturbation = 0.0;
        c.z_process.drift = 0.0;
        c.z_process.vol = zero.clone();
        c.population.mortality_vol = zero.clone();
        c.population.fertility_vol = zero.clone();
        c.population.wage_growth = 0.0;
        c.outputs.checkpoints.retain(|t| *t <= c.time.t0 + 2.0);
    })?;
    let agg = initial_aggregates(&quiet)?;
    let th = quiet.setup.theta;
    let w = quiet.setup.z.z0 * PensionWeight::from_aggregates(&quiet.setup.rule, &agg).factor(th);
    let phi = payout_intensity(th, w, agg.p_min_total)?;
    variant(&quiet, |c| c.zu.zu0 = phi.powf(th))
}

fn convergence_suite(scn: &ValidatedScenario, opts: &SuiteOptions) -> Result<Vec<TestReport>, VerifyError> {
    let mut out = Vec::new();
    let (dts, errs) = level_errors(scn, opts.convergence_paths, zu_scheme_error)?;
    out.push(convergence_study("zu-euler-noisy", &dts, &errs, STRONG_BAND)?.to_report());
    let zero = vec![0.0; scn.market.n()];
    let calm = variant(scn, |c| {
        c.zu.delta = zero.clone();
        c.z_process.vol = zero.clone();
    })?;
    let (dts, errs) = level_errors(&calm, 1, zu_scheme_error)?;
    out.push(convergence_study("zu-euler-deterministic", &dts, &errs, DETERMINISTIC_BAND)?.to_report());

    let unit = unit_stopping_scenario(scn)?;
    let demo = demography(&unit, None, &[])?.aggregates;
    let w = brownian_path(&unit, 0);
    let path = simulate_optimal_fund(&unit.setup, &unit.market, &unit.grid, &demo, &w, Strategy::OPTIMAL, &RecordPlan::Steps(vec![0]))?;
    let tau = path.tau_z.unwrap_or(f64::INFINITY);
    out.push(
        TestReport::two_sided("convergence.unit-stopping-time", "tau_Z in the unit scenario", tau, unit.grid.t0() + 1.0, unit.grid.dt())
            .with_paths(1, unit.grid.dt()),
    );
    for r in &mut out {
        r.paths = r.paths.max(1);
    }
    Ok(out)
}

fn boundary_suite(scn: &ValidatedScenario) -> Result<Vec<TestReport>, VerifyError> {
    let s = &scn.setup;
    let agg = initial_aggregates(scn)?;
    let a = s.exposure(&scn.market);
    let w = s.z.z0 * PensionWeight::from_aggregates(&s.rule, &agg).factor(s.theta);
    let inp = ControlInputs { theta: s.theta, x: s.x0, zu: s.zu0, w, p_min: agg.p_min_total, a: &a, delta_x: &s.delta_x };
    let g0 = s.f0 - s.x0;
    let cushions: Vec<f64> = (0..12).map(|j| g0 * 0.5f64.powi(j)).collect();
    let rep = boundary_limits_probe(&inp, &cushions)?;
    let rel = |x: f64, y: f64| if y == 0.0 { x.abs() } else { (x / y - 1.0).abs() };
    Ok(vec![
        TestReport::two_sided("boundary.halving", "max relative deviation of gap ratio from 1/2", rep.max_halving_deviation, 0.0, 1e-10),
        TestReport::two_sided("boundary.pi-slope", "relative error of fitted investment slope", rel(rep.fitted_pi_slope, rep.pi_slope), 0.0, 1e-10),
        TestReport::two_sided("boundary.rho-slope", "relative error of fitted pension slope", rel(rep.fitted_rho_slope, rep.rho_slope), 0.0, 1e-10),
        TestReport::two_sided("boundary.limit-pi", "|pi*(0) - delta_x|", rep.limit_pi_gap, 0.0, 0.0),
        TestReport::two_sided("boundary.limit-rho", "rho*(0) - 1", rep.limit_rho_gap, 0.0, 0.0),
    ])
}

/// Closed-form survival of a cohort under Gompertz mortality between ages
/// `a0` and `a1`.
pub fn gompertz_survival(a: f64, b: f64, a0: f64, a1: f64) -> f64 {
    (-(a / b) * ((b * a1).exp() - (b * a0).exp())).exp()
}

fn population_suite(scn: &ValidatedScenario) -> Result<Vec<TestReport>, VerifyError> {
    let zero = vec![0.0; scn.market.n()];
    let closed = |c: &mut ScenarioConfig| {
        c.population.birth = BirthSpec::Rate(0.0);
        c.population.initial = InitialSpec::Uniform;
        c.population.mortality_vol = zero.clone();
        c.population.fertility_vol = zero.clone();
    };
    let d = 0.02;
    let flat = variant(scn, |c| {
        closed(c);
        c.population.mortality = MortalitySpec::Flat { rate: d };
    })?;
    let last = flat.grid.steps();
    let traj = demography(&flat, None, &[last])?;
    let n0 = flat.config.population.newborn_density;
    let bins = flat.population.grid.bins();
    let tt = flat.grid.t1() - flat.grid.t0();
    let exact = n0 * (-d * tt).exp();
    let dens = &traj.snapshots[0].1.density.0;
    let decay_err = (last..bins - 1).map(|i| (dens[i] / exact - 1.0).abs()).fold(0.0, f64::max);

    let (ga, gb) = match scn.config.population.mortality {
        MortalitySpec::Gompertz { a, b } => (a, b),
        _ => (2e-5, 0.1),
    };
    let smooth = variant(scn, |c| {
        closed(c);
        c.population.mortality = MortalitySpec::Gompertz { a: ga, b: gb };
    })?;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for (_, level) in levels(&smooth)? {
        let k = level.grid.steps();
        let traj = demography(&level, None, &[k])?;
        let dens = &traj.snapshots[0].1.density.0;
        let grid = &level.population.grid;
        let err = (k..grid.bins() - 1)
            .map(|i| {
                let a1 = grid.age(i);
                let oracle = n0 * gompertz_survival(ga, gb, a1 - tt, a1);
                (dens[i] / oracle - 1.0).abs()
            })
            .fold(0.0, f64::max);
        dts.push(level.grid.dt());
        errs.push(err);
    }
    Ok(vec![
        TestReport::two_sided("population.constant-decay", "max relative error against n0 exp(-d t)", decay_err, 0.0, 1e-12),
        convergence_study("population-characteristics", &dts, &errs, DETERMINISTIC_BAND)?.to_report(),
    ])
}

/// Largest and smallest relative drift residuals on a 20 x 20 grid of
/// times and cushions `[5, 100]` along the first path, with the coefficient
/// drift scaled by `1 + eps`.
pub fn hjb_grid_residuals(scn: &ValidatedScenario, eps: f64) -> Result<(f64, f64), VerifyError> {
    let s = &scn.setup;
    let th = s.theta;
    let w = brownian_path(scn, 0);
    let demo = demography(scn, Some(&w), &[])?.aggregates;
    let path = simulate_optimal_fund(s, &scn.market, &scn.grid, &demo, &w, Strategy::OPTIMAL, &RecordPlan::All)?;
    let a = s.exposure(&scn.market);
    let a_sq = norm_sq(&a);
    let eta = scn.market.eta();
    let steps = scn.grid.steps();
    let (mut hi, mut lo): (f64, f64) = (0.0, f64::INFINITY);
    let mut z_pref = s.z.z0;
    let mut zk = 0;
    for i in 0..20 {
        let k = i * (steps - 1) / 19;
        let Some(rec) = path.records.get(k).filter(|r| !r.stopped) else { break };
        while zk < k {
            z_pref = s.z.step(z_pref, w.row(zk), scn.grid.dt());
            zk += 1;
        }
        let agg = &demo[k];
        let r = scn.market.r.at(k);
        let weight = z_pref * PensionWeight::from_aggregates(&s.rule, agg).factor(th);
        let kappa = payout_intensity(th, weight, agg.p_min_total)? * rec.zu.powf(-1.0 / th);
        let b = consistency_drift(th, r, a_sq, kappa) * (1.0 + eps);
        let u = CrraFundUtility::new(th, rec.zu, rec.x)?;
        let v = PensionersUtility::from_weight(th, weight)?;
        let shift = ShiftDynamics { mu_x: rec.x * r + agg.c - agg.p_min_total + dot(&s.delta_x, eta), delta_x: s.delta_x.clone() };
        let zu = ZuDynamics { b, delta: s.delta.clone() };
        let inputs = HjbInputs { r, c: agg.c, p_min: agg.p_min_total, eta, projector: scn.market.projector() };
        for j in 0..20 {
            let g = 5.0 * 20f64.powf(j as f64 / 19.0);
            let res = hjb_drift_residual(&u, &v, &shift, &zu, &inputs, rec.x + g)?;
            hi = hi.max(res.relative);
            lo = lo.min(res.relative);
        }
    }
    Ok((hi, lo))
}

fn hjb_suite(scn: &ValidatedScenario, opts: &SuiteOptions) -> Result<Vec<TestReport>, VerifyError> {
    let (hi, _) = hjb_grid_residuals(scn, 0.0)?;
    let (_, lo) = hjb_grid_residuals(scn, opts.hjb_perturbation)?;
    let mut perturbed = TestReport::two_sided("hjb.perturbed", "min relative residual with perturbed coefficient drift", lo, 0.0, 1e-3);
    perturbed.pass = lo > 1e-3;
    Ok(vec![
        TestReport::two_sided("hjb.consistent", "max relative drift residual on 20x20 grid", hi, 0.0, 1e-8).with_paths(1, scn.grid.dt()),
        perturbed.with_paths(1, scn.grid.dt()).with_detail("must exceed the threshold"),
    ])
}
