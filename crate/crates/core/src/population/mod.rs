//! Age- and time-structured population with stochastic demographic rates,
//! integrated along characteristics (cohort shift with `da = dt`), and the
//! demographic aggregates the pension formulas consume.

mod aggregates;
mod cohort;
mod history;
mod table;

pub use aggregates::{aggregates, DemographicAggregates, PensionRule};
pub use cohort::{
    evolve_population, sample_rates, AgeGrid, BaselineRates, CohortDensity, DemographicFactor, DemographicRates,
    RateModel,
};
pub use history::{past_contribution, pension_floor, History, StationaryHistory, WageModel};
pub use table::{read_rate_table, RateTableRow};

mod state;
pub use state::{PopulationModel, PopulationState, PopulationTrajectory};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("age step {da} differs from time step {dt}")]
    GridMismatch { da: f64, dt: f64 },
    #[error("invalid age grid: {0}")]
    InvalidAgeGrid(String),
    #[error("negative wage {wage} at age bin {bin}")]
    NegativeWage { bin: usize, wage: f64 },
    #[error("age {age} is below the entry age {entry}")]
    AgeBelowEntry { age: f64, entry: f64 },
    #[error("retirement date {date} precedes the available history (starts at {start})")]
    MissingHistory { date: f64, start: f64 },
    #[error("vector length {got} does not match {expected} age bins")]
    LengthMismatch { expected: usize, got: usize },
    #[error("contribution rate {0} outside [0, 1]")]
    ContributionRate(f64),
    #[error("rate table: {0}")]
    Table(String),
}
