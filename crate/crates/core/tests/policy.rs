use paygsim_core::engine::{brownian_path, demography, simulate_paths};
use paygsim_core::policy::{marginal_kernel_path, simulate_optimal_fund, FundPath, RecordPlan, Strategy};
use paygsim_core::scenario::{load, ValidatedScenario};

fn baseline(overrides: &[&str]) -> ValidatedScenario {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/baseline.ini")).unwrap();
    load(&text, &overrides.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap_or_else(|e| panic!("{e:?}"))
}

fn run(scn: &ValidatedScenario, paths: usize) -> Vec<FundPath> {
    simulate_paths(scn, paths, Strategy::OPTIMAL, &RecordPlan::All).unwrap()
}

#[test]
fn cushion_scales_with_its_initial_value() {
    let base = ["time.steps=256", "z_process.z0=0.02"];
    let a = run(&baseline(&base), 20);
    let mut o = base.to_vec();
    o.push("shift.f0=30");
    let b = run(&baseline(&o), 20);
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.tau_z, q.tau_z);
        for (r, s) in p.records.iter().zip(&q.records) {
            assert!((s.cushion / r.cushion - 3.0).abs() < 1e-12);
            if !r.stopped {
                assert!(((s.rho_star - 1.0) / (r.rho_star - 1.0) - 3.0).abs() < 1e-9);
            }
            assert_eq!(r.zu, s.zu);
        }
    }
    assert!(a.iter().any(|p| p.tau_z.is_some()));
}

#[test]
fn paths_freeze_after_the_stopping_time() {
    let scn = baseline(&["time.steps=256", "z_process.z0=0.05"]);
    let p = &run(&scn, 4)[0];
    let tau = p.tau_z.expect("stops");
    let frozen: Vec<_> = p.records.iter().filter(|r| r.stopped).collect();
    assert!(!frozen.is_empty());
    assert!(frozen[0].t >= tau - scn.grid.dt());
    assert!(frozen.windows(2).all(|w| w[0].f_star == w[1].f_star && w[0].zu == w[1].zu));
}

#[test]
fn marginal_utility_follows_the_kernel_to_first_order() {
    let mut residuals = Vec::new();
    for steps in ["time.steps=256", "time.steps=1024"] {
        let scn = baseline(&[steps]);
        let demo = demography(&scn, None, &[]).unwrap().aggregates;
        let mut sum = 0.0;
        for id in 0..20 {
            let w = brownian_path(&scn, id);
            let path = simulate_optimal_fund(&scn.setup, &scn.market, &scn.grid, &demo, &w, Strategy::OPTIMAL, &RecordPlan::All).unwrap();
            sum += marginal_kernel_path(&path, &scn.setup, &scn.market, &w).unwrap().mean_relative;
        }
        residuals.push(sum / 20.0);
    }
    // one-step residuals are O(dt): a 4x smaller step shrinks them about 4x
    let ratio = residuals[0] / residuals[1];
    assert!((3.0..5.5).contains(&ratio), "{residuals:?}");
}

#[test]
fn noiseless_preference_is_constant_to_first_order() {
    let quiet = ["market.mu=0.02", "zu.delta=0, 0", "shift.phi_x=0", "z_process.vol=0, 0"];
    let mut devs = Vec::new();
    for steps in ["time.steps=256", "time.steps=1024"] {
        let mut o = quiet.to_vec();
        o.push(steps);
        let scn = baseline(&o);
        let path = &run(&scn, 1)[0];
        let z0 = path.records[0].preference;
        let dev = path.records.iter().map(|r| (r.preference - z0).abs()).fold(0.0, f64::max);
        assert!(dev <= 10.0 * scn.grid.dt() * z0.abs(), "dev {dev} at dt {}", scn.grid.dt());
        devs.push(dev);
    }
    assert!(devs[1] < devs[0]);
}
