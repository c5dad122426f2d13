//! Experiment configuration as read from JSON.

use std::path::PathBuf;

use anyhow::{bail, ensure, Result};
use serde::{Deserialize, Serialize};
use stakelab::infinite_pop::DiffuseSpec;
use stakelab::limit_laws::StakeRule;
use stakelab::RewardSchedule;

/// Which process each grid point simulates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `K` investors, the first tracked and the rest sharing `N − n_0` equally.
    #[default]
    Urn,
    /// Diffuse-base feature model with initial mass `N`.
    Feature { base: DiffuseSpec },
    /// The tracked incumbent against one other incumbent, diluted by newcomers.
    Dilution { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramOf {
    Ratio,
    Share,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub of: HistogramOf,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            of: HistogramOf::Ratio,
            lo: 0.0,
            hi: 5.0,
            bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub model: Model,
    pub schedule: RewardSchedule,
    pub n_grid: Vec<f64>,
    /// Initial stake of the tracked investor.
    pub initial: StakeRule,
    #[serde(default = "default_investors")]
    pub investors: usize,
    pub horizon: u64,
    pub replicates: u64,
    /// Deviation threshold in `|π_t/π_0 − 1| > ε`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Levels `x` for `P(ratio < x)` and `P(ratio > x)`; defaults to `[epsilon]`.
    #[serde(default)]
    pub tail_levels: Vec<f64>,
    #[serde(default)]
    pub histogram: HistogramSpec,
    /// Snapshot spacing; 0 keeps only the start and the horizon.
    #[serde(default = "default_stride")]
    pub stride: u64,
    pub estimators: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory. Not part of the configuration hash.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_investors() -> usize {
    2
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_stride() -> u64 {
    100
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        ensure!(!self.n_grid.is_empty(), "the N grid is empty");
        for &n in &self.n_grid {
            ensure!(
                n > 0.0 && n.is_finite(),
                "grid values must be positive, got {n}"
            );
            let n0 = self.initial.stake(n);
            ensure!(
                n0 > 0.0 && n0 < n,
                "initial stake {n0} must lie in (0, {n}) at N = {n}"
            );
        }
        ensure!(self.replicates >= 1, "replicate count must be at least 1");
        ensure!(self.epsilon > 0.0, "epsilon must be positive");
        ensure!(self.investors >= 2, "at least two investors are needed");
        ensure!(self.horizon >= 1, "horizon must be at least 1");
        ensure!(
            self.tail_levels.iter().all(|&x| x > 0.0),
            "tail levels must be positive"
        );
        let h = &self.histogram;
        ensure!(
            h.bins >= 1 && h.hi > h.lo,
            "histogram needs bins >= 1 and hi > lo"
        );
        if let Model::Dilution { theta } = self.model {
            ensure!(
                theta >= 0.0 && theta.is_finite(),
                "dilution must be nonnegative"
            );
        }
        if self.estimators.is_empty() {
            bail!("no estimators requested");
        }
        Ok(())
    }

    pub fn tail_levels(&self) -> Vec<f64> {
        if self.tail_levels.is_empty() {
            vec![self.epsilon]
        } else {
            self.tail_levels.clone()
        }
    }

    /// Initial coins at supply `n`: the tracked investor first.
    pub fn coins(&self, n: f64) -> Vec<f64> {
        let n0 = self.initial.stake(n);
        let others = self.investors - 1;
        let mut coins = vec![n0];
        coins.extend(std::iter::repeat_n((n - n0) / others as f64, others));
        coins
    }

    /// Keeps about `factor` of the grid (endpoints included) and of the replicates.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        ensure!(
            factor > 0.0 && factor <= 1.0,
            "scale must lie in (0, 1], got {factor}"
        );
        self.n_grid = thin(&self.n_grid, factor);
        self.replicates = scale_count(self.replicates, factor);
        Ok(self)
    }
}

pub fn scale_count(count: u64, factor: f64) -> u64 {
    ((count as f64 * factor).round() as u64).max(1)
}

/// Evenly spaced subset of `grid` of size `max(1, round(len · factor))`.
pub fn thin(grid: &[f64], factor: f64) -> Vec<f64> {
    let len = grid.len();
    let keep = ((len as f64 * factor).round() as usize).clamp(1, len);
    if keep == len {
        return grid.to_vec();
    }
    if keep == 1 {
        return vec![grid[0]];
    }
    (0..keep)
        .map(|i| grid[((i * (len - 1)) as f64 / (keep - 1) as f64).round() as usize])
        .collect()
}

/// `start, start + step, …` up to and including `end`.
pub fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step).round() as usize;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

/// Input of the `moments` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    #[serde(default = "moments_name")]
    pub name: String,
    pub schedule: RewardSchedule,
    pub n: f64,
    pub pi0: f64,
    pub horizon: u64,
    #[serde(default = "one")]
    pub stride: u64,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

fn moments_name() -> String {
    "moments".into()
}

fn one() -> u64 {
    1
}

/// Input of the `limits` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    #[serde(default = "limits_name")]
    pub name: String,
    pub schedule: RewardSchedule,
    pub n_grid: Vec<f64>,
    pub initial: StakeRule,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// When set, also reports the expected-limit product of the dilution model.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "limit_horizon")]
    pub horizon: u64,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

fn limits_name() -> String {
    "limits".into()
}

fn limit_horizon() -> u64 {
    1_000_000
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({
            "schedule": {"kind": "constant", "reward": 1.0},
            "n_grid": [1000.0, 1500.0, 2000.0],
            "initial": {"rule": "fraction", "p": 0.5},
            "horizon": 50000,
            "replicates": 10000,
            "estimators": ["p_max"],
            "out": "/tmp/x"
        }))
        .unwrap()
    }

    #[test]
    fn defaults_and_validation() {
        let c = fig1();
        c.validate().unwrap();
        assert_eq!(c.model, Model::Urn);
        assert_eq!(c.coins(1000.0), vec![500.0, 500.0]);
        let mut bad = c.clone();
        bad.epsilon = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.n_grid.push(-1.0);
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.replicates = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<ExperimentConfig, _> = serde_json::from_value(serde_json::json!({
            "schedule": {"kind": "constant", "reward": 1.0},
            "n_grid": [10.0], "initial": {"rule": "constant", "c": 1.0},
            "horizon": 5, "replicates": 1, "estimators": [], "colour": "red"
        }));
        assert!(r.is_err());
    }

    #[test]
    fn output_path_is_not_serialized() {
        let text = serde_json::to_string(&fig1()).unwrap();
        assert!(!text.contains("/tmp/x"));
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let g = grid(1000.0, 10000.0, 500.0);
        assert_eq!(g.len(), 19);
        let t = thin(&g, 0.2);
        assert_eq!(t, vec![1000.0, 4000.0, 7000.0, 10000.0]);
        assert_eq!(thin(&g, 1.0), g);
        assert_eq!(thin(&g, 0.01), vec![1000.0]);
        assert_eq!(scale_count(10_000, 0.2), 2000);
        assert_eq!(scale_count(3, 0.01), 1);
    }
}
