//! Engine for consistent dynamic-utility management of a pay-as-you-go pension
//! fund: market, population, preferences, closed-form policy, simulation and
//! verification.

// domain guards are written `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod market;
pub mod population;
pub mod stats;
pub mod stochastic;
pub mod utility;
pub mod policy;
pub mod scenario;
pub mod engine;
pub mod verify;
