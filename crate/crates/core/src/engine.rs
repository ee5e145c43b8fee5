//! Path-parallel execution. Each path is an independent task keyed by its
//! id; results come back in id order whatever the scheduling.

use rayon::prelude::*;
use thiserror::Error;

use crate::policy::{simulate_optimal_fund, FundPath, PolicyError, RecordPlan, Strategy};
use crate::population::{DemographicAggregates, PopulationError, PopulationTrajectory};
use crate::scenario::ValidatedScenario;
use crate::stochastic::{sample_brownian, BrownianPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub fn brownian_path(scn: &ValidatedScenario, path_id: u64) -> BrownianPath {
    sample_brownian(&scn.grid, scn.market.n(), scn.config.mc.seed, path_id)
}

/// Population run along `w`, or the shared deterministic run when `w` is
/// `None` or the rates carry no noise.
pub fn demography(
    scn: &ValidatedScenario,
    w: Option<&BrownianPath>,
    snapshot_steps: &[usize],
) -> Result<PopulationTrajectory, EngineError> {
    Ok(scn.population.run(&scn.grid, &scn.market.r, w, snapshot_steps)?)
}

/// Runs `f` on every path id in `ids`, sharing one deterministic population
/// run when possible.
pub fn map_paths<T, F>(scn: &ValidatedScenario, ids: std::ops::Range<u64>, f: F) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(&BrownianPath, &[DemographicAggregates]) -> Result<T, EngineError> + Sync,
{
    let shared = if scn.shared_demography() { Some(demography(scn, None, &[])?) } else { None };
    ids.into_par_iter()
        .map(|id| {
            let w = brownian_path(scn, id);
            match &shared {
                Some(traj) => f(&w, &traj.aggregates),
                None => {
                    let traj = demography(scn, Some(&w), &[])?;
                    f(&w, &traj.aggregates)
                }
            }
        })
        .collect()
}

/// Fund paths under `strategy` for path ids `0..paths`.
pub fn simulate_paths(
    scn: &ValidatedScenario,
    paths: usize,
    strategy: Strategy,
    plan: &RecordPlan,
) -> Result<Vec<FundPath>, EngineError> {
    map_paths(scn, 0..paths as u64, |w, demo| {
        Ok(simulate_optimal_fund(&scn.setup, &scn.market, &scn.grid, demo, w, strategy, plan)?)
    })
}

/// Runs `f` inside a pool of `threads` workers (`None`: rayon's default).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, EngineError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().map_err(|e| EngineError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
