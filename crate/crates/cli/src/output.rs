//! Run outputs: path CSV, summary, verification report and manifest.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use paygsim_core::engine::{simulate_paths, EngineError};
use paygsim_core::policy::{FundPath, RecordPlan, Strategy};
use paygsim_core::scenario::ValidatedScenario;
use paygsim_core::stats::{mean_se, quantile};
use paygsim_core::verify::{run_suite, Suite, SuiteOptions, TestReport};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{write_file, Failure};

pub const TAU_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

pub fn engine_failure(e: EngineError) -> Failure {
    Failure::Validation(vec![e.to_string()])
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub engine_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub files: Vec<String>,
}

pub struct ManifestBuilder {
    command: String,
    started: u128,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        Self { command: command.to_string(), started: unix_ms() }
    }

    pub fn finish(self, scn: &ValidatedScenario, dir: &Path, files: &[&str]) -> Result<(), Failure> {
        let m = RunManifest {
            command: self.command,
            scenario_hash: scn.hash(),
            seed: scn.config.mc.seed,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: self.started,
            finished_unix_ms: unix_ms(),
            files: files.iter().map(|f| f.to_string()).collect(),
        };
        write_json(dir, "manifest.json", &serde_json::to_value(&m).expect("manifest serializes"))
    }
}

pub fn write_json(dir: &Path, name: &str, v: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).expect("json value serializes");
    text.push('\n');
    write_file(dir, name, text.as_bytes())
}

/// Finite values as numbers, the rest as `null`.
pub fn finite(x: f64) -> Value {
    if x.is_finite() { json!(x) } else { Value::Null }
}

/// Checkpoint steps to record, falling back to the horizon.
pub fn record_plan(scn: &ValidatedScenario) -> RecordPlan {
    if scn.checkpoint_steps.is_empty() {
        RecordPlan::Steps(vec![scn.grid.steps()])
    } else {
        RecordPlan::Steps(scn.checkpoint_steps.clone())
    }
}

pub fn csv_header(n: usize) -> String {
    let mut h = String::from("path_id,t,F_star,X,cushion,Zu,rho_star");
    for j in 0..n {
        let _ = write!(h, ",pi_star_{j}");
    }
    h.push_str(",P_min,C,N_r,N_w,Y,stopped\n");
    h
}

pub fn csv_rows(paths: &[FundPath], out: &mut String) {
    let f = |x: f64| format!("{x:.16e}");
    for p in paths {
        for r in &p.records {
            let _ = write!(out, "{},{},{},{},{},{},{}", p.path_id, f(r.t), f(r.f_star), f(r.x), f(r.cushion), f(r.zu), f(r.rho_star));
            for v in &r.pi_star {
                let _ = write!(out, ",{}", f(*v));
            }
            let _ = writeln!(out, ",{},{},{},{},{},{}", f(r.p_min), f(r.c), f(r.n_r), f(r.n_w), f(r.y), r.stopped);
        }
    }
}

/// Stopping times with unstopped paths censored at `+inf`.
pub fn stopping_times(paths: &[FundPath]) -> Vec<f64> {
    paths.iter().map(|p| p.tau_z.unwrap_or(f64::INFINITY)).collect()
}

pub fn tau_summary(paths: &[FundPath]) -> Value {
    let taus = stopping_times(paths);
    let stopped = taus.iter().filter(|t| t.is_finite()).count();
    let q: serde_json::Map<String, Value> =
        TAU_QUANTILES.iter().map(|&q| (format!("q{:02}", (q * 100.0).round() as u32), finite(quantile(&taus, q)))).collect();
    json!({
        "stopped": stopped,
        "stopped_fraction": stopped as f64 / paths.len().max(1) as f64,
        "quantiles": q,
    })
}

pub fn summary(scn: &ValidatedScenario, paths: &[FundPath]) -> Value {
    let n_rec = paths.first().map(|p| p.records.len()).unwrap_or(0);
    let mut checkpoints = Vec::new();
    for j in 0..n_rec {
        let col = |g: &dyn Fn(&paygsim_core::policy::FundRecord) -> f64| -> Vec<f64> { paths.iter().map(|p| g(&p.records[j])).collect() };
        let mut means = serde_json::Map::new();
        let mut ses = serde_json::Map::new();
        let fields: [(&str, Vec<f64>); 9] = [
            ("F_star", col(&|r| r.f_star)),
            ("X", col(&|r| r.x)),
            ("cushion", col(&|r| r.cushion)),
            ("Zu", col(&|r| r.zu)),
            ("rho_star", col(&|r| r.rho_star)),
            ("preference", col(&|r| r.preference)),
            ("Y", col(&|r| r.y)),
            ("P_min", col(&|r| r.p_min)),
            ("C", col(&|r| r.c)),
        ];
        for (name, xs) in fields {
            let s = mean_se(&xs);
            means.insert(name.into(), finite(s.mean));
            ses.insert(name.into(), finite(s.se));
        }
        let dim = paths[0].records[j].pi_star.len();
        let pi: Vec<Value> = (0..dim).map(|i| finite(mean_se(&col(&|r| r.pi_star[i])).mean)).collect();
        let stopped = paths.iter().filter(|p| p.records[j].stopped).count();
        checkpoints.push(json!({
            "t": paths[0].records[j].t,
            "mean": means,
            "se": ses,
            "pi_star_mean": pi,
            "stopped_fraction": stopped as f64 / paths.len() as f64,
        }));
    }
    let violations: usize = paths.iter().map(|p| p.violations).sum();
    let min_cushion = paths.iter().map(|p| p.min_cushion).fold(f64::INFINITY, f64::min);
    let min_rho_excess = paths.iter().map(|p| p.min_rho_excess).fold(f64::INFINITY, f64::min);
    json!({
        "scenario_hash": scn.hash(),
        "paths": paths.len(),
        "dt": scn.grid.dt(),
        "checkpoints": checkpoints,
        "tau_z": tau_summary(paths),
        "admissibility": {
            "violations": violations,
            "min_cushion": finite(min_cushion),
            "min_rho_excess": finite(min_rho_excess),
        },
    })
}

pub fn simulate(scn: &ValidatedScenario, dir: &Path) -> Result<(), Failure> {
    let manifest = ManifestBuilder::start("simulate");
    let paths = simulate_paths(scn, scn.config.mc.paths, Strategy::OPTIMAL, &record_plan(scn)).map_err(engine_failure)?;
    let mut csv = csv_header(scn.market.n());
    csv_rows(&paths, &mut csv);
    write_file(dir, "paths.csv", csv.as_bytes())?;
    write_json(dir, "summary.json", &summary(scn, &paths))?;
    manifest.finish(scn, dir, &["paths.csv", "summary.json"])
}

fn error_report(suite: Suite, message: String) -> TestReport {
    let mut r = TestReport::two_sided(suite.name(), "suite error", f64::NAN, 0.0, 0.0).with_detail(message);
    r.pass = false;
    r
}

pub fn verify(scn: &ValidatedScenario, suites: &[Suite], opts: &SuiteOptions, dir: &Path) -> Result<(), Failure> {
    let manifest = ManifestBuilder::start("verify");
    let mut entries = Vec::new();
    let mut all_pass = true;
    for &s in suites {
        let reports = match run_suite(scn, s, opts) {
            Ok(r) => r,
            Err(e) => vec![error_report(s, e.to_string())],
        };
        let pass = reports.iter().all(|r| r.pass);
        all_pass &= pass;
        let values: Vec<Value> = reports.iter().map(|r| serde_json::to_value(r).expect("report serializes")).collect();
        entries.push(json!({ "suite": s.name(), "pass": pass, "reports": values }));
    }
    let report = json!({ "scenario_hash": scn.hash(), "pass": all_pass, "suites": entries });
    write_json(dir, "verify.json", &report)?;
    manifest.finish(scn, dir, &["verify.json"])?;
    if all_pass { Ok(()) } else { Err(Failure::SuiteFailed) }
}
