//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the
//! process exits nonzero if any criterion fails.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use paygsim_core::engine::{demography, simulate_paths};
use paygsim_core::policy::{controls_from_cushion, pension_schedule, simulate_optimal_fund, ControlInputs, FundPath, RecordPlan, Strategy};
use paygsim_core::population::{DemographicAggregates, PensionRule};
use paygsim_core::scenario::{load, ValidatedScenario};
use paygsim_core::stats::quantile;
use paygsim_core::utility::{CrraFundUtility, PensionWeight, PensionersUtility};
use paygsim_core::verify::{
    argmax_oracle, hjb_grid_residuals, martingale_test, run_suite, supermartingale_test, OracleState, PreferencePath, Suite,
    SuiteOptions,
};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

// Pinned tolerances.
const MARTINGALE_PATHS: usize = 20_000;
const OVER_INVESTMENT: f64 = 0.5;
const ORACLE_STATES: usize = 100;
const ORACLE_GRID_STEPS: f64 = 2.0;
const CONVERGENCE_PATHS: usize = 400;
const BOUNDARY_TOL: f64 = 1e-10;
const REDUCTION_TOL: f64 = 1e-12;
const DECAY_TOL: f64 = 1e-12;
const FIRST_ORDER_BAND: (f64, f64) = (0.8, 1.2);
const HJB_TOL: f64 = 1e-8;
const HJB_PERTURBED_FLOOR: f64 = 1e-3;
const RUNTIME_TARGET_S: f64 = 60.0;

fn baseline_text() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/baseline.ini")).unwrap()
}

fn scenario(overrides: &[&str]) -> ValidatedScenario {
    load(&baseline_text(), &overrides.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap_or_else(|e| panic!("{e:?}"))
}

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn line(&mut self, id: &str, title: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let mut out = std::io::stdout();
        let _ = writeln!(out, "{id:>3} [{tag}] {title}: {detail}");
        let _ = out.flush();
        if !pass {
            self.failures.push(id.to_string());
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
}

/// Market price of risk and range projection computed from the raw inputs.
fn hand_market(scn: &ValidatedScenario) -> (Vec<f64>, DMatrix<f64>) {
    let m = &scn.config.market;
    let d = m.sigma.len();
    let n = m.sigma[0].len();
    let sigma = DMatrix::from_fn(d, n, |i, j| m.sigma[i][j]);
    let gram_inv = (&sigma * sigma.transpose()).try_inverse().unwrap();
    let excess = DVector::from_iterator(d, m.mu.iter().map(|x| x - m.r));
    let eta = sigma.transpose() * &gram_inv * excess;
    let proj = sigma.transpose() * gram_inv * &sigma;
    (eta.iter().copied().collect(), proj)
}

fn times(proj: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (proj * DVector::from_column_slice(v)).iter().copied().collect()
}

fn c1_c2(out: &mut Outcome) -> Vec<FundPath> {
    let scn = scenario(&[&format!("mc.paths={MARTINGALE_PATHS}")]);
    let mut steps = vec![0];
    steps.extend(scn.checkpoint_steps.iter().copied());
    let plan = RecordPlan::Steps(steps);
    let clock = Instant::now();
    let optimal_paths = simulate_paths(&scn, MARTINGALE_PATHS, Strategy::OPTIMAL, &plan).unwrap();
    let runtime = clock.elapsed().as_secs_f64();
    let optimal: Vec<PreferencePath> = optimal_paths.iter().map(|p| PreferencePath::from_fund(p, Strategy::OPTIMAL)).collect();

    // Z_0 = U(0, F_0) for the shifted power utility, with no pension accrued yet
    let s = &scn.setup;
    let z0 = s.zu0 * (s.f0 - s.x0).powf(1.0 - s.theta) / (1.0 - s.theta);
    let reports = martingale_test(&optimal, scn.grid.dt()).unwrap();
    let start_ok = optimal.iter().all(|p| (p.values[0] / z0 - 1.0).abs() < 1e-14);
    let worst = reports.iter().map(|r| (r.estimate - z0).abs() / r.threshold).fold(0.0, f64::max);
    out.line(
        "C1",
        "martingale consistency",
        start_ok && reports.iter().all(|r| r.pass),
        format!(
            "Z0 = {z0:.6}, max |mean Z_t - Z0| / max(3SE, 1% Z0) = {worst:.3} over t = {:?}, {MARTINGALE_PATHS} paths, dt = 2^-10, runtime {runtime:.1}s (target < {RUNTIME_TARGET_S}s)",
            reports.iter().map(|r| r.statistic.trim_start_matches("mean Z at t=").to_string()).collect::<Vec<_>>()
        ),
    );

    let over = Strategy::over_investment(OVER_INVESTMENT);
    let perturbed: Vec<PreferencePath> =
        simulate_paths(&scn, MARTINGALE_PATHS, over, &plan).unwrap().iter().map(|p| PreferencePath::from_fund(p, over)).collect();
    let reps = supermartingale_test(&perturbed, &optimal, true, scn.grid.dt()).unwrap();
    let dec = reps.last().unwrap();
    // drift loss of the investment operator, -U (1-theta) eps^2 |a|^2 / (2 theta), integrated at U ~ Z0
    let (eta, proj) = hand_market(&scn);
    let a: Vec<f64> = times(&proj, &s.delta).iter().zip(&eta).map(|(d, e)| d + e).collect();
    let a_sq: f64 = a.iter().map(|x| x * x).sum();
    let th = s.theta;
    let predicted = -z0 * (1.0 - th) * OVER_INVESTMENT.powi(2) * a_sq / (2.0 * th) * (scn.grid.t1() - scn.grid.t0());
    out.line(
        "C2",
        "supermartingale under 50% over-investment",
        reps.iter().all(|r| r.pass),
        format!(
            "CRN decrement at t=1: {:.4} (SE {:.4}, z = {:.1}); first-order prediction {predicted:.4}; one-sided checks {}",
            dec.estimate,
            dec.standard_error,
            dec.estimate / dec.standard_error,
            if reps[..reps.len() - 1].iter().all(|r| r.pass) { "hold" } else { "violated" }
        ),
    );

    optimal_paths
}

fn c3(out: &mut Outcome) {
    let scn = scenario(&[]);
    let s = &scn.setup;
    let th = s.theta;
    let demo = demography(&scn, None, &[]).unwrap().aggregates;
    let (eta, proj) = hand_market(&scn);
    let delta_r = times(&proj, &s.delta);
    let a: Vec<f64> = delta_r.iter().zip(&eta).map(|(d, e)| d + e).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..ORACLE_STATES {
        let k = (rng.next_u64() % demo.len() as u64) as usize;
        let agg = &demo[k];
        let g = uniform(&mut rng, 0.05f64.ln(), 50f64.ln()).exp();
        let zu = uniform(&mut rng, 0.25f64.ln(), 4f64.ln()).exp();
        let x = uniform(&mut rng, -5.0, 5.0);
        // Example 1: w = Z omega^r (p^min)^{1-theta}
        let PensionRule::Example1 { p_min } = s.rule else { unreachable!() };
        let w = s.z.z0 * uniform(&mut rng, 0.5, 2.0) * agg.omega_r * p_min.powf(1.0 - th);
        let z = x + g;
        let u_z = zu * g.powf(-th);
        let u_zz = -th * zu * g.powf(-th - 1.0);
        let gamma_z: Vec<f64> = s.delta.iter().zip(&s.delta_x).map(|(d, dx)| u_z * d - u_zz * dx).collect();
        let u = CrraFundUtility::new(th, zu, x).unwrap();
        let v = PensionersUtility::from_weight(th, w).unwrap();
        let st = OracleState {
            u: &u,
            v: &v,
            z,
            p_min: agg.p_min_total,
            gamma_z: &gamma_z,
            eta: scn.market.eta(),
            projector: scn.market.projector(),
        };
        let res = argmax_oracle(&st).unwrap();
        // closed forms: pi* = delta_x + G a / theta, rho* = 1 + G (w / (P^min Zu))^{1/theta}
        let pi_star: Vec<f64> = s.delta_x.iter().zip(&a).map(|(dx, ai)| dx + g * ai / th).collect();
        let rho_star = 1.0 + g * (w / (agg.p_min_total * zu)).powf(1.0 / th);
        let dev = res.normalized_deviation(scn.market.projector(), &pi_star, rho_star, ORACLE_GRID_STEPS);
        worst = worst.max(dev).max((res.rho - rho_star).abs() / (ORACLE_GRID_STEPS * res.rho_step));
    }
    out.line(
        "C3",
        "argmax oracle equivalence",
        worst <= 1.0,
        format!("{ORACLE_STATES} random states, worst deviation = {worst:.3e} x ({ORACLE_GRID_STEPS} grid steps)"),
    );
}

fn convergence_line(out: &mut Outcome, id: &str, title: &str, reports: &[paygsim_core::verify::TestReport]) {
    let detail = reports
        .iter()
        .map(|r| format!("{} = {:.4} (band {:.2}..{:.2})", r.name, r.estimate, r.target - r.threshold, r.target + r.threshold))
        .collect::<Vec<_>>()
        .join("; ");
    out.line(id, title, reports.iter().all(|r| r.pass), detail);
}

fn c4_c5(out: &mut Outcome) {
    let scn = scenario(&[]);
    let opts = SuiteOptions { convergence_paths: CONVERGENCE_PATHS, ..SuiteOptions::default() };
    let k = run_suite(&scn, Suite::KernelIdentity, &opts).unwrap();
    convergence_line(out, "C4", "kernel identity strong order", &k);
    let c = run_suite(&scn, Suite::Convergence, &opts).unwrap();
    let (slopes, tau): (Vec<_>, Vec<_>) = c.into_iter().partition(|r| r.name.starts_with("convergence.zu"));
    let mut detail_ok = slopes.iter().all(|r| r.pass);
    let t = &tau[0];
    detail_ok &= t.pass;
    let detail = format!(
        "{}; unit tau_Z = {:.6} (target 1, tol one step {:.2e})",
        slopes.iter().map(|r| format!("{} = {:.4}", r.name, r.estimate)).collect::<Vec<_>>().join("; "),
        t.estimate,
        t.threshold
    );
    out.line("C5", "coefficient scheme orders and unit stopping time", detail_ok, detail);
}

fn c6(out: &mut Outcome) {
    let scn = scenario(&[]);
    let s = &scn.setup;
    let (eta, proj) = hand_market(&scn);
    let a: Vec<f64> = times(&proj, &s.delta).iter().zip(&eta).map(|(d, e)| d + e).collect();
    let hand_slope = a.iter().map(|x| x * x).sum::<f64>().sqrt() / s.theta;
    let reps = run_suite(&scn, Suite::BoundaryLimits, &SuiteOptions::default()).unwrap();
    let halving = reps.iter().find(|r| r.name == "boundary.halving").unwrap().estimate;
    let suite_ok = reps.iter().all(|r| r.pass);
    // the probe reports the investment slope; compare with the hand value
    let state = scn.population.initial_state(0.0, scn.market.r.at(0)).unwrap();
    let agg = scn.population.aggregates(&state).unwrap();
    let w = s.z.z0 * PensionWeight::from_aggregates(&s.rule, &agg).factor(s.theta);
    let inp = ControlInputs { theta: s.theta, x: s.x0, zu: s.zu0, w, p_min: agg.p_min_total, a: &a, delta_x: &s.delta_x };
    let probe = paygsim_core::policy::boundary_limits_probe(&inp, &[1.0, 0.5, 0.25]).unwrap();
    let slope_ok = (probe.pi_slope / hand_slope - 1.0).abs() <= BOUNDARY_TOL;
    let at_zero = controls_from_cushion(0.0, &inp).unwrap();
    let limits_ok = at_zero.rho == 1.0 && at_zero.pi == s.delta_x;
    out.line(
        "C6",
        "boundary limits",
        suite_ok && slope_ok && limits_ok && halving <= BOUNDARY_TOL,
        format!("halving deviation {halving:.2e} (tol {BOUNDARY_TOL:.0e}); investment slope {:.12} vs hand |a|/theta {hand_slope:.12}; limits (delta_x, 1) {}", probe.pi_slope, if limits_ok { "exact" } else { "missed" }),
    );
}

fn c7(out: &mut Outcome, optimal_paths: &[FundPath], steps: usize) {
    let violations: usize = optimal_paths.iter().map(|p| p.violations).sum();
    let min_g = optimal_paths.iter().map(|p| p.min_cushion).fold(f64::INFINITY, f64::min);
    let min_rho = optimal_paths.iter().map(|p| p.min_rho_excess).fold(f64::INFINITY, f64::min);
    out.line(
        "C7",
        "sustainability and adequacy",
        violations == 0 && min_g > 0.0 && min_rho >= 0.0,
        format!("{violations} violations over {MARTINGALE_PATHS} paths x {} steps; min cushion {min_g:.4}, min rho* - 1 = {min_rho:.3e}", steps),
    );
}

fn c8(out: &mut Outcome) {
    let p = 0.4;
    let scn = scenario(&["pension.rule=example2", "pension.p_ret=0.4", "pension.lambda=0", "time.steps=256"]);
    let snaps: Vec<usize> = (0..=scn.grid.steps()).step_by(16).collect();
    let traj = demography(&scn, None, &snaps).unwrap();
    let w0 = paygsim_core::engine::brownian_path(&scn, 0);
    let path = simulate_optimal_fund(&scn.setup, &scn.market, &scn.grid, &traj.aggregates, &w0, Strategy::OPTIMAL, &RecordPlan::All).unwrap();
    let th = scn.setup.theta;
    let a = scn.setup.exposure(&scn.market);
    let retirees = scn.population.grid.retirees();
    let mut worst: f64 = 0.0;
    for (k, state) in &traj.snapshots {
        let agg: &DemographicAggregates = &traj.aggregates[*k];
        let rec = &path.records[*k];
        let z_pref = scn.setup.z.z0;
        let w2 = z_pref * PensionWeight::from_aggregates(&scn.setup.rule, agg).factor(th);
        let w1 = z_pref * PensionWeight::Example1 { omega_r: agg.n_r, p_min: p }.factor(th);
        let inp = |w: f64, total: f64| ControlInputs { theta: th, x: rec.x, zu: rec.zu, w, p_min: total, a: &a, delta_x: &scn.setup.delta_x };
        let rho2 = controls_from_cushion(rec.cushion, &inp(w2, agg.p_min_total)).unwrap().rho;
        let rho1 = controls_from_cushion(rec.cushion, &inp(w1, p * agg.n_r)).unwrap().rho;
        let schedule = pension_schedule(&state.floors, rho2);
        for i in retirees.clone() {
            worst = worst.max((schedule[i] / (p * rho1) - 1.0).abs());
        }
    }
    out.line(
        "C8",
        "Example 2 reduction to uniform Example 1",
        worst <= REDUCTION_TOL,
        format!("max relative gap {worst:.2e} over {} times x {} retiree ages (tol {REDUCTION_TOL:.0e})", traj.snapshots.len(), retirees.len()),
    );
}

fn c9(out: &mut Outcome) {
    let closed = ["population.birth_rate=0", "population.initial=uniform"];
    let d = 0.03;
    let mut flat: Vec<String> = closed.iter().map(|s| s.to_string()).collect();
    flat.push("population.mortality=flat".into());
    flat.push(format!("population.death_rate={d}"));
    let scn = scenario(&flat.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let k = scn.grid.steps();
    let traj = demography(&scn, None, &[k]).unwrap();
    let n0 = scn.config.population.newborn_density;
    let dens = &traj.snapshots[0].1.density.0;
    let bins = dens.len();
    let exact = n0 * (-d * (scn.grid.t1() - scn.grid.t0())).exp();
    let decay = (k..bins - 1).map(|i| (dens[i] / exact - 1.0).abs()).fold(0.0, f64::max);

    // Gompertz cohorts: n(t, a) = n0 exp(-(A/B)(e^{B a} - e^{B (a - t)}))
    let (ga, gb) = (2e-5, 0.1);
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for steps in [256usize, 512, 1024] {
        let mut o: Vec<String> = closed.iter().map(|s| s.to_string()).collect();
        o.push(format!("time.steps={steps}"));
        let scn = scenario(&o.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        let traj = demography(&scn, None, &[steps]).unwrap();
        let dens = &traj.snapshots[0].1.density.0;
        let grid = &scn.population.grid;
        let t = scn.grid.t1() - scn.grid.t0();
        let err = (steps..grid.bins() - 1)
            .map(|i| {
                let age = grid.age(i);
                let oracle = n0 * (-(ga / gb) * ((gb * age).exp() - (gb * (age - t)).exp())).exp();
                (dens[i] / oracle - 1.0).abs()
            })
            .fold(0.0, f64::max);
        dts.push(scn.grid.dt());
        errs.push(err);
    }
    let lx: Vec<f64> = dts.iter().map(|x: &f64| x.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|x: &f64| x.ln()).collect();
    let slope = paygsim_core::stats::ls_slope(&lx, &ly);
    out.line(
        "C9",
        "population oracle",
        decay <= DECAY_TOL && slope >= FIRST_ORDER_BAND.0 && slope <= FIRST_ORDER_BAND.1,
        format!("constant-mortality decay error {decay:.2e} (tol {DECAY_TOL:.0e}); characteristics order {slope:.4} from errors {errs:?}"),
    );
}

fn taus(paths: &[FundPath]) -> Vec<f64> {
    paths.iter().map(|p| p.tau_z.unwrap_or(f64::INFINITY)).collect()
}

fn c10(out: &mut Outcome) {
    let plan = RecordPlan::Steps(vec![0]);
    let run = |o: &[&str]| {
        let scn = scenario(o);
        simulate_paths(&scn, scn.config.mc.paths, Strategy::OPTIMAL, &plan).unwrap()
    };
    let base = ["mc.paths=2000", "time.steps=256", "z_process.z0=0.02"];
    let f0_taus: Vec<Vec<f64>> = ["shift.f0=5", "shift.f0=10", "shift.f0=40"]
        .iter()
        .map(|f| {
            let mut o = base.to_vec();
            o.push(f);
            taus(&run(&o))
        })
        .collect();
    let stopped = f0_taus[0].iter().filter(|t| t.is_finite()).count();
    let invariant = f0_taus.windows(2).all(|w| w[0] == w[1]) && stopped > 0;

    let z_values = [0.01, 0.015, 0.02, 0.03];
    let medians: Vec<f64> = z_values
        .iter()
        .map(|z| {
            let zs = format!("z_process.z0={z}");
            quantile(&taus(&run(&["mc.paths=2000", "time.steps=512", "time.t1=2", &zs])), 0.5)
        })
        .collect();
    let nonincreasing = medians.windows(2).all(|w| w[1] <= w[0]);

    // per-unit-cushion excess pension (rho* - 1)/G = (Z omega^r / (Zu N^r))^{1/theta} / p^min
    let mut formula_ok = true;
    let mut trends = Vec::new();
    for z in ["0.003", "0.3"] {
        let zs = format!("z_process.z0={z}");
        let mut factors = Vec::new();
        let mut ratio = 0.0;
        for th in [0.3, 0.5, 0.7] {
            let ts = format!("zu.theta={th}");
            let scn = scenario(&[&zs, &ts]);
            let s = &scn.setup;
            let state = scn.population.initial_state(0.0, scn.market.r.at(0)).unwrap();
            let agg = scn.population.aggregates(&state).unwrap();
            let PensionRule::Example1 { p_min } = s.rule else { unreachable!() };
            ratio = s.z.z0 * agg.omega_r / (s.zu0 * agg.n_r);
            let hand = ratio.powf(1.0 / th) / p_min;
            let a = s.exposure(&scn.market);
            let w = s.z.z0 * PensionWeight::from_aggregates(&s.rule, &agg).factor(th);
            let inp = ControlInputs { theta: th, x: s.x0, zu: s.zu0, w, p_min: agg.p_min_total, a: &a, delta_x: &s.delta_x };
            let lib = controls_from_cushion(1.0, &inp).unwrap().rho_excess;
            formula_ok &= (lib / hand - 1.0).abs() < 1e-12;
            factors.push(lib);
        }
        let up = factors.windows(2).all(|w| w[1] > w[0]);
        let down = factors.windows(2).all(|w| w[1] < w[0]);
        formula_ok &= if ratio > 1.0 { down } else { up };
        trends.push(format!("ratio {ratio:.3}: {}", if up { "increasing" } else if down { "decreasing" } else { "mixed" }));
    }
    out.line(
        "C10",
        "comparative statics",
        invariant && nonincreasing && formula_ok,
        format!(
            "tau_Z identical across F0 in {{5, 10, 40}} ({stopped}/2000 stopped): {invariant}; median tau_Z for Z0 {z_values:?}: {:.4?} non-increasing: {nonincreasing}; pension factor in theta {}",
            medians, trends.join(", ")
        ),
    );
}

fn c11(out: &mut Outcome) {
    let scn = scenario(&[]);
    let (consistent, _) = hjb_grid_residuals(&scn, 0.0).unwrap();
    let (_, perturbed) = hjb_grid_residuals(&scn, 0.01).unwrap();
    out.line(
        "C11",
        "HJB drift residual",
        consistent <= HJB_TOL && perturbed > HJB_PERTURBED_FLOOR,
        format!("max relative residual {consistent:.2e} (tol {HJB_TOL:.0e}) on 20x20 grid; with 1% drift perturbation min {perturbed:.2e} (must exceed {HJB_PERTURBED_FLOOR:.0e})"),
    );
}

fn main() {
    let mut out = Outcome { failures: Vec::new() };
    let optimal = c1_c2(&mut out);
    c3(&mut out);
    c4_c5(&mut out);
    c6(&mut out);
    c7(&mut out, &optimal, scenario(&[]).grid.steps());
    drop(optimal);
    c8(&mut out);
    c9(&mut out);
    c10(&mut out);
    c11(&mut out);
    if out.failures.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {:?}", out.failures);
        std::process::exit(1);
    }
}
