use paygsim_core::population::{evolve_population, sample_rates};
use paygsim_core::scenario::{load, ValidatedScenario};
use paygsim_core::stochastic::sample_brownian;
use proptest::prelude::*;

fn baseline(overrides: &[&str]) -> ValidatedScenario {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/baseline.ini")).unwrap();
    load(&text, &overrides.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap_or_else(|e| panic!("{e:?}"))
}

#[test]
fn stable_population_is_stationary() {
    let scn = baseline(&["time.steps=256"]);
    let traj = scn.population.run(&scn.grid, &scn.market.r, None, &[]).unwrap();
    let first = traj.aggregates[0];
    for agg in &traj.aggregates {
        for (x, y) in [(agg.n_r, first.n_r), (agg.n_w, first.n_w), (agg.c, first.c), (agg.p_min_total, first.p_min_total), (agg.omega_r, first.omega_r)] {
            assert!((x / y - 1.0).abs() < 1e-10, "{x} vs {y}");
        }
    }
}

#[test]
fn zero_mortality_without_births_conserves_mass() {
    let scn = baseline(&["time.steps=256", "population.mortality=flat", "population.death_rate=0", "population.birth_rate=0"]);
    let k = scn.grid.steps();
    let traj = scn.population.run(&scn.grid, &scn.market.r, None, &[0, k]).unwrap();
    let grid = &scn.population.grid;
    let m0 = traj.snapshots[0].1.density.total(grid);
    let m1 = traj.snapshots[1].1.density.total(grid);
    assert!((m1 / m0 - 1.0).abs() < 1e-12);
}

#[test]
fn noisy_rates_keep_the_density_nonnegative() {
    let scn = baseline(&["time.steps=128", "population.mortality_vol=0, 0.3", "population.fertility_vol=0, 0.3"]);
    let w = sample_brownian(&scn.grid, 2, 5, 0);
    let mut n = scn.population.initial.clone();
    for k in 0..scn.grid.steps() {
        let rates = sample_rates(&scn.population.rates, &w, k);
        n = evolve_population(&n, &rates, &scn.population.grid, scn.grid.dt()).unwrap();
        assert!(n.0.iter().all(|x| *x >= 0.0 && x.is_finite()));
    }
    let traj = scn.population.run(&scn.grid, &scn.market.r, Some(&w), &[scn.grid.steps()]).unwrap();
    let last = &traj.snapshots[0].1.density.0;
    for (a, b) in last.iter().zip(&n.0) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn aggregates_scale_with_the_newborn_density(scale in 0.1f64..10.0) {
        let one = baseline(&["time.steps=64"]);
        let s = format!("population.newborn_density={scale}");
        let many = baseline(&["time.steps=64", &s]);
        let a = one.population.run(&one.grid, &one.market.r, None, &[]).unwrap().aggregates;
        let b = many.population.run(&many.grid, &many.market.r, None, &[]).unwrap().aggregates;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((y.n_r / (scale * x.n_r) - 1.0).abs() < 1e-12);
            prop_assert!((y.c / (scale * x.c) - 1.0).abs() < 1e-12);
            prop_assert!((y.p_min_total / (scale * x.p_min_total) - 1.0).abs() < 1e-12);
        }
    }
}
