//! Risk and performance measures for finite scenario distributions.
//!
//! The crate computes the monotone Sharpe ratio, Lp-deviation, Lp-CVAR and
//! the buffered probability of exceedance for discrete distributions and
//! empirical samples, solves the associated static portfolio-selection
//! problem, and provides closed-form solutions (with Monte Carlo
//! validation) for two dynamic problems under geometric Brownian motion:
//! proportional trading toward a target and optimal selling at a threshold.

pub mod deviation;
pub mod dynamic;
pub mod msr;
pub mod optim;
pub mod portfolio;
pub mod risk;
pub mod scenario;

pub use scenario::{Exponent, SampleSet, ScenarioDistribution, ScenarioError};
