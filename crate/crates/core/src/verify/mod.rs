//! Certification harness: Monte Carlo (super)martingale tests on the
//! preference process, brute-force maximization of the drift operators, and
//! convergence-order studies.

mod oracle;
mod suites;

pub use oracle::{argmax_oracle, golden_max, OracleResult, OracleState, GRID_POINTS};
pub use suites::{gompertz_survival, hjb_grid_residuals, run_suite, unit_stopping_scenario, Suite, SuiteOptions};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineError;
use crate::policy::{FundPath, PolicyError, Strategy};
use crate::stats::{ls_slope, mean_se};
use crate::utility::UtilityError;

pub const MIN_MARTINGALE_PATHS: usize = 1000;
/// Relative band added to the 3-SE statistical threshold.
pub const RELATIVE_BAND: f64 = 0.01;
/// Largest admissible share of discarded perturbed paths.
pub const MAX_DISCARD_SHARE: f64 = 0.01;
pub const STRONG_BAND: (f64, f64) = (0.35, 0.65);
pub const DETERMINISTIC_BAND: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("martingale test needs at least {need} paths, got {got}")]
    TooFewPaths { got: usize, need: usize },
    #[error("convergence study needs at least 3 halving step sizes, got {0:?}")]
    InsufficientLevels(Vec<f64>),
    #[error("{discarded} of {total} perturbed paths left the admissible domain")]
    InadmissiblePerturbation { discarded: usize, total: usize },
    #[error("scenario variant rejected: {0}")]
    Scenario(String),
    #[error("paths disagree on the recorded checkpoints")]
    CheckpointMismatch,
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// `Z_t = U(t, F_t) + int_0^t V ds` at the recorded checkpoints of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePath {
    pub path_id: u64,
    pub strategy: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Path stayed in the domain with finite values throughout.
    pub admissible: bool,
}

impl PreferencePath {
    pub fn from_fund(path: &FundPath, strategy: Strategy) -> Self {
        let tag = if strategy.is_optimal() {
            "optimal".to_string()
        } else {
            format!("perturbed(pi_scale={}, rho_scale={})", strategy.pi_scale, strategy.rho_scale)
        };
        let values: Vec<f64> = path.records.iter().map(|r| r.preference).collect();
        Self {
            path_id: path.path_id,
            strategy: tag,
            times: path.records.iter().map(|r| r.t).collect(),
            admissible: path.violations == 0 && values.iter().all(|v| v.is_finite() && *v >= 0.0),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: String,
    pub estimate: f64,
    pub target: f64,
    pub standard_error: f64,
    pub threshold: f64,
    pub pass: bool,
    pub paths: usize,
    pub dt: f64,
    pub runtime_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl TestReport {
    /// Two-sided report: pass iff `|estimate - target| <= threshold`.
    pub fn two_sided(name: impl Into<String>, statistic: impl Into<String>, estimate: f64, target: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic: statistic.into(),
            estimate,
            target,
            standard_error: 0.0,
            threshold,
            pass: (estimate - target).abs() <= threshold,
            paths: 0,
            dt: 0.0,
            runtime_s: 0.0,
            detail: None,
        }
    }

    pub fn with_paths(mut self, paths: usize, dt: f64) -> Self {
        self.paths = paths;
        self.dt = dt;
        self
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.standard_error = se;
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

fn column(paths: &[&PreferencePath], j: usize) -> Vec<f64> {
    paths.iter().map(|p| p.values[j]).collect()
}

fn check_layout(paths: &[&PreferencePath]) -> Result<Vec<f64>, VerifyError> {
    let times = paths.first().map(|p| p.times.clone()).unwrap_or_default();
    if paths.iter().any(|p| p.times.len() != times.len() || p.values.len() != times.len()) {
        return Err(VerifyError::CheckpointMismatch);
    }
    Ok(times)
}

/// Mean preference at every recorded time after the first against its
/// initial value; each checkpoint passes iff the deviation is within
/// `max(3 SE, 1% |Z_0|)`.
pub fn martingale_test(paths: &[PreferencePath], dt: f64) -> Result<Vec<TestReport>, VerifyError> {
    if paths.len() < MIN_MARTINGALE_PATHS {
        return Err(VerifyError::TooFewPaths { got: paths.len(), need: MIN_MARTINGALE_PATHS });
    }
    let refs: Vec<&PreferencePath> = paths.iter().collect();
    let times = check_layout(&refs)?;
    let z0 = mean_se(&column(&refs, 0)).mean;
    Ok((1..times.len())
        .map(|j| {
            let s = mean_se(&column(&refs, j));
            let threshold = (3.0 * s.se).max(RELATIVE_BAND * z0.abs());
            TestReport::two_sided("martingale", format!("mean Z at t={}", times[j]), s.mean, z0, threshold)
                .with_se(s.se)
                .with_paths(paths.len(), dt)
        })
        .collect())
}

/// One-sided test of the perturbed preference process, plus a
/// common-random-numbers decrement test against the optimal paths sharing
/// the same ids. With `min_effect`, the final decrement must be negative
/// beyond 3 SE.
pub fn supermartingale_test(
    perturbed: &[PreferencePath],
    optimal: &[PreferencePath],
    min_effect: bool,
    dt: f64,
) -> Result<Vec<TestReport>, VerifyError> {
    let total = perturbed.len();
    let keep: Vec<usize> = (0..total).filter(|&i| perturbed[i].admissible).collect();
    let discarded = total - keep.len();
    if discarded as f64 > MAX_DISCARD_SHARE * total as f64 {
        return Err(VerifyError::InadmissiblePerturbation { discarded, total });
    }
    if keep.len() < MIN_MARTINGALE_PATHS {
        return Err(VerifyError::TooFewPaths { got: keep.len(), need: MIN_MARTINGALE_PATHS });
    }
    let pert: Vec<&PreferencePath> = keep.iter().map(|&i| &perturbed[i]).collect();
    let times = check_layout(&pert)?;
    let z0 = mean_se(&column(&pert, 0)).mean;
    let mut out = Vec::new();
    for j in 1..times.len() {
        let s = mean_se(&column(&pert, j));
        let mut rep = TestReport::two_sided("supermartingale", format!("mean Z - Z0 at t={} (one-sided)", times[j]), s.mean - z0, 0.0, 3.0 * s.se)
            .with_se(s.se)
            .with_paths(keep.len(), dt);
        rep.pass = s.mean - z0 <= 3.0 * s.se;
        out.push(rep);
    }
    if !optimal.is_empty() {
        let by_id: std::collections::HashMap<u64, &PreferencePath> = optimal.iter().map(|p| (p.path_id, p)).collect();
        let j = times.len() - 1;
        let diffs: Vec<f64> = pert.iter().filter_map(|p| by_id.get(&p.path_id).map(|o| p.values[j] - o.values[j])).collect();
        let s = mean_se(&diffs);
        let mut rep = TestReport::two_sided(
            "supermartingale.decrement",
            format!("mean Z_pert - Z_opt at t={} (common random numbers)", times[j]),
            s.mean,
            0.0,
            3.0 * s.se,
        )
        .with_se(s.se)
        .with_paths(diffs.len(), dt);
        rep.pass = if min_effect { s.mean < -3.0 * s.se } else { s.mean <= 3.0 * s.se };
        out.push(rep.with_detail(if min_effect { "decrement must be negative beyond 3 SE" } else { "decrement must not be positive beyond 3 SE" }));
    }
    if discarded > 0 {
        if let Some(first) = out.first_mut() {
            first.detail = Some(format!("{discarded} inadmissible paths discarded"));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of log error against log dt; `None` when exact.
    pub slope: Option<f64>,
    pub exact: bool,
    pub band: (f64, f64),
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn to_report(&self) -> TestReport {
        let (lo, hi) = self.band;
        let mut r = TestReport::two_sided(
            format!("convergence.{}", self.name),
            "log-log slope of error against dt",
            self.slope.unwrap_or(f64::NAN),
            0.5 * (lo + hi),
            0.5 * (hi - lo),
        );
        r.pass = self.pass;
        r.dt = self.dts.iter().cloned().fold(f64::INFINITY, f64::min);
        r.with_detail(if self.exact { "exact".to_string() } else { format!("errors {:?} at dt {:?}", self.errors, self.dts) })
    }
}

/// Fits the observed order. Identically zero errors count as exact.
pub fn convergence_study(name: &str, dts: &[f64], errors: &[f64], band: (f64, f64)) -> Result<ConvergenceReport, VerifyError> {
    let halving = dts.windows(2).all(|w| ((w[0] / w[1]) - 2.0).abs() < 1e-9 || ((w[1] / w[0]) - 2.0).abs() < 1e-9);
    if dts.len() < 3 || dts.len() != errors.len() || !halving {
        return Err(VerifyError::InsufficientLevels(dts.to_vec()));
    }
    if errors.iter().all(|e| *e == 0.0) {
        return Ok(ConvergenceReport { name: name.into(), dts: dts.to_vec(), errors: errors.to_vec(), slope: None, exact: true, band, pass: true });
    }
    let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let slope = ls_slope(&lx, &ly);
    let pass = slope.is_finite() && slope >= band.0 && slope <= band.1;
    Ok(ConvergenceReport { name: name.into(), dts: dts.to_vec(), errors: errors.to_vec(), slope: Some(slope), exact: false, band, pass })
}
