use paygsim_core::scenario::{load, ValidatedScenario};
use paygsim_core::verify::{run_suite, Suite, SuiteOptions};

fn baseline(overrides: &[&str]) -> ValidatedScenario {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/baseline.ini")).unwrap();
    load(&text, &overrides.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap_or_else(|e| panic!("{e:?}"))
}

fn small() -> SuiteOptions {
    SuiteOptions { paths: Some(2000), convergence_paths: 200, ..SuiteOptions::default() }
}

#[test]
fn every_suite_passes_on_baseline() {
    let scn = baseline(&[]);
    for suite in Suite::ALL {
        let reports = run_suite(&scn, suite, &small()).unwrap();
        assert!(!reports.is_empty());
        for r in &reports {
            assert!(r.pass, "{} failed: {r:?}", suite.name());
        }
    }
}

#[test]
fn inconsistent_coefficient_drift_breaks_the_martingale() {
    let scn = baseline(&["zu.drift_perturbation=1"]);
    let reports = run_suite(&scn, Suite::Martingale, &small()).unwrap();
    assert!(reports.iter().any(|r| !r.pass));
    let hjb = run_suite(&baseline(&[]), Suite::Hjb, &SuiteOptions { hjb_perturbation: 0.2, ..small() }).unwrap();
    assert!(hjb.iter().all(|r| r.pass));
}

#[test]
fn suite_names_round_trip() {
    for s in Suite::ALL {
        assert_eq!(s.name().parse::<Suite>().unwrap(), s);
    }
    assert!("argmx".parse::<Suite>().is_err());
}
