//! Stake-share dynamics under proof-of-stake reward schedules.
//!
//! The crate is split along the same lines as the models it simulates:
//!
//! - [`schedule`]: deterministic reward rules and the supply paths they induce.
//! - [`urn`]: the finite-population time-dependent Pólya urn and its Monte Carlo ensembles.
//! - [`moments`]: exact variance factors, raw/central moments and Chebyshev-type bounds.
//! - [`limit_laws`]: limiting distributions, investor classification, samplers and KS statistics.
//! - [`infinite_pop`]: Blackwell-MacQueen predictive rules, the feature model and
//!   order-of-appearance bookkeeping.
//! - [`dynamical`]: incumbents diluted by entering investors.
//!
//! Every stochastic routine takes an explicit seed; ensembles derive per-replicate
//! streams with [`rng::replicate_seed`] and aggregate in fixed blocks, so results do
//! not depend on the number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamical;
pub mod infinite_pop;
pub mod limit_laws;
pub mod moments;
pub mod rng;
pub mod schedule;
pub mod special;
pub mod stats;
pub mod urn;

mod error;

pub use error::{Error, Result};
pub use schedule::{RewardPath, RewardSchedule, SupplyPath};
pub use urn::{EnsembleSummary, Trajectory, UrnState};
