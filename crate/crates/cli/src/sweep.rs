//! One-parameter sweeps with common random numbers across values.

use std::fmt::Write as _;
use std::path::Path;

use paygsim_core::engine::simulate_paths;
use paygsim_core::policy::Strategy;
use paygsim_core::population::PensionRule;
use paygsim_core::scenario::{parse, ValidatedScenario};
use paygsim_core::stats::{mean_se, quantile};
use paygsim_core::utility::PensionWeight;
use serde::Serialize;
use serde_json::json;

use crate::output::{engine_failure, finite, record_plan, stopping_times, tau_summary, write_json, ManifestBuilder};
use crate::{write_file, Failure, Loaded};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub paths: usize,
    pub mean_rho_star: f64,
    pub mean_cushion: f64,
    /// `Z omega / (Zu N^r)` at the start, with the rule's pensioner weight.
    pub weight_ratio: f64,
    /// `weight_ratio^{1/theta}`.
    pub excess_factor: f64,
    /// Exact slope of `rho* - 1` in the cushion at the start.
    pub rho_slope: f64,
    pub tau_median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

pub fn trend(xs: &[f64]) -> Trend {
    let up = xs.windows(2).all(|w| w[1] >= w[0]);
    let down = xs.windows(2).all(|w| w[1] <= w[0]);
    match (up, down) {
        (true, true) => Trend::Constant,
        (true, false) => Trend::Increasing,
        (false, true) => Trend::Decreasing,
        (false, false) => Trend::Mixed,
    }
}

fn start_ratios(scn: &ValidatedScenario) -> Result<(f64, f64), Failure> {
    let state = scn.population.initial_state(scn.grid.t0(), scn.market.r.at(0)).map_err(|e| Failure::Validation(vec![e.to_string()]))?;
    let agg = scn.population.aggregates(&state).map_err(|e| Failure::Validation(vec![e.to_string()]))?;
    let s = &scn.setup;
    let omega = match s.rule {
        PensionRule::Example1 { .. } => agg.omega_r,
        PensionRule::Example2 { .. } => agg.omega_r_tilde,
    };
    let ratio = s.z.z0 * omega / (s.zu0 * agg.n_r);
    let w = s.z.z0 * PensionWeight::from_aggregates(&s.rule, &agg).factor(s.theta);
    let slope = if w == 0.0 { 0.0 } else { (w / (agg.p_min_total * s.zu0)).powf(1.0 / s.theta) };
    Ok((ratio, slope))
}

pub fn sweep(loaded: &Loaded, param: &str, values: &[f64], dir: &Path) -> Result<(), Failure> {
    let manifest = ManifestBuilder::start("sweep");
    let key = param.trim();
    let (sec, name) = key.split_once('.').ok_or_else(|| Failure::Validation(vec![format!("unknown parameter '{key}'")]))?;
    let canonical = parse(loaded.scenario.canonical()).map_err(|e| Failure::Validation(e.iter().map(|e| e.to_string()).collect()))?;
    if canonical.get(sec, name).and_then(|v| v.trim().parse::<f64>().ok()).is_none() {
        return Err(Failure::Validation(vec![format!("unknown parameter '{key}'")]));
    }
    let mut rows = Vec::new();
    let mut taus = Vec::new();
    let mut summaries = Vec::new();
    for &v in values {
        let scn = loaded.with(&[format!("{key}={v}")])?;
        let paths = simulate_paths(&scn, scn.config.mc.paths, Strategy::OPTIMAL, &record_plan(&scn)).map_err(engine_failure)?;
        let last = |f: &dyn Fn(&paygsim_core::policy::FundRecord) -> f64| {
            mean_se(&paths.iter().filter_map(|p| p.records.last().map(f)).collect::<Vec<_>>()).mean
        };
        let (ratio, slope) = start_ratios(&scn)?;
        let t = stopping_times(&paths);
        rows.push(SweepRow {
            value: v,
            paths: paths.len(),
            mean_rho_star: last(&|r| r.rho_star),
            mean_cushion: last(&|r| r.cushion),
            weight_ratio: ratio,
            excess_factor: ratio.powf(1.0 / scn.setup.theta),
            rho_slope: slope,
            tau_median: quantile(&t, 0.5),
        });
        summaries.push(json!({ "value": v, "tau_z": tau_summary(&paths) }));
        taus.push(t);
    }
    let medians: Vec<f64> = rows.iter().map(|r| r.tau_median).collect();
    let factors: Vec<f64> = rows.iter().map(|r| r.excess_factor).collect();
    let invariant = taus.windows(2).all(|w| w[0] == w[1]);
    let diagnostics = json!({
        "parameter": key,
        "rho_star_trend": trend(&rows.iter().map(|r| r.mean_rho_star).collect::<Vec<_>>()),
        "excess_factor_trend": trend(&factors),
        "rho_slope_trend": trend(&rows.iter().map(|r| r.rho_slope).collect::<Vec<_>>()),
        "median_tau_nonincreasing": medians.windows(2).all(|w| w[1] <= w[0]),
        "tau_distribution_invariant": invariant,
    });

    let mut csv = String::from("value,paths,mean_rho_star,mean_cushion,weight_ratio,excess_factor,rho_slope,tau_median\n");
    let f = |x: f64| format!("{x:.16e}");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            f(r.value),
            r.paths,
            f(r.mean_rho_star),
            f(r.mean_cushion),
            f(r.weight_ratio),
            f(r.excess_factor),
            f(r.rho_slope),
            f(r.tau_median)
        );
    }
    write_file(dir, "sweep.csv", csv.as_bytes())?;
    let json_rows: Vec<_> = rows
        .iter()
        .zip(&summaries)
        .map(|(r, s)| {
            json!({
                "value": r.value,
                "paths": r.paths,
                "mean_rho_star": finite(r.mean_rho_star),
                "mean_cushion": finite(r.mean_cushion),
                "weight_ratio": finite(r.weight_ratio),
                "excess_factor": finite(r.excess_factor),
                "rho_slope": finite(r.rho_slope),
                "tau_z": s["tau_z"],
            })
        })
        .collect();
    write_json(dir, "sweep.json", &json!({ "scenario_hash": loaded.scenario.hash(), "rows": json_rows, "diagnostics": diagnostics }))?;
    manifest.finish(&loaded.scenario, dir, &["sweep.csv", "sweep.json"])
}
