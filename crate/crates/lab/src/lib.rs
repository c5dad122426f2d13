//! Experiment runner for `stakelab`: JSON-configured Monte Carlo experiments, figure
//! presets, exact oracles and the acceptance checks behind the `stakelab` binary.

pub mod checks;
pub mod config;
pub mod estimators;
pub mod experiment;
pub mod figures;
pub mod oracle;
pub mod output;
