//! Finite-population time-dependent Pólya urn.
//!
//! At step `t` one investor is drawn with probability equal to its current share
//! and credited `R_t` new coins, so that
//! `π_{k,t} = (N_{t-1}/N_t) π_{k,t-1} + (R_t/N_t) 1{k selected}`.
//! Investor indices are zero-based throughout the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::schedule::{RewardPath, RewardSchedule};
use crate::stats::MeanVar;

/// The running sum of coins is recomputed from scratch every `2^16` steps.
pub const RESUM_INTERVAL: u64 = 1 << 16;

/// Coin counts `n_{k,t}`, their total `N_t` and the step counter `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnState {
    t: u64,
    coins: Vec<f64>,
    supply: f64,
}

impl UrnState {
    pub fn new(coins: Vec<f64>) -> Result<Self> {
        if coins.is_empty() {
            return Err(Error::invalid("an urn needs at least one investor"));
        }
        if let Some(c) = coins.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::invalid(format!(
                "initial coins must be positive, got {c}"
            )));
        }
        let supply = coins.iter().sum();
        Ok(Self {
            t: 0,
            coins,
            supply,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn coins(&self) -> &[f64] {
        &self.coins
    }

    pub fn supply(&self) -> f64 {
        self.supply
    }

    pub fn len(&self) -> usize {
        self.coins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coins.is_empty()
    }

    pub fn share(&self, k: usize) -> f64 {
        self.coins[k] / self.supply
    }

    pub fn shares(&self) -> Vec<f64> {
        self.coins.iter().map(|c| c / self.supply).collect()
    }

    /// Inverse-CDF selection: the first index (ascending) whose cumulative share
    /// exceeds `u`.
    pub fn select(&self, u: f64) -> usize {
        select_by_mass(&self.coins, u * self.supply)
    }

    /// Adds `reward` to investor `k` and advances time by one step.
    pub fn credit(&mut self, k: usize, reward: f64) {
        self.coins[k] += reward;
        self.supply += reward;
        self.t += 1;
        if self.t.is_multiple_of(RESUM_INTERVAL) {
            self.supply = self.coins.iter().sum();
        }
    }

    /// One urn step with reward `reward` and uniform draw `u`; returns the selected index.
    pub fn step_with_reward(&mut self, reward: f64, u: f64) -> usize {
        let k = self.select(u);
        self.credit(k, reward);
        k
    }

    /// One urn step under `schedule`, with `R_{t+1}` evaluated at the current supply.
    pub fn step(&mut self, schedule: &RewardSchedule, u: f64) -> Result<usize> {
        let reward = schedule.reward_at(self.t + 1, self.supply)?;
        if !(self.supply + reward).is_finite() {
            return Err(Error::SupplyOverflow { step: self.t + 1 });
        }
        Ok(self.step_with_reward(reward, u))
    }
}

/// First index whose running sum of `masses` exceeds `target`; the last index if
/// rounding leaves `target` at or beyond the total.
pub(crate) fn select_by_mass(masses: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (k, m) in masses.iter().enumerate() {
        acc += m;
        if target < acc {
            return k;
        }
    }
    masses.len() - 1
}

/// Snapshot times `0, stride, 2·stride, …` plus the horizon. A zero stride keeps
/// only the endpoints.
pub fn snapshot_times(horizon: u64, stride: u64) -> Vec<u64> {
    let mut times = vec![0];
    if stride > 0 {
        times.extend((1..).map(|i| i * stride).take_while(|&t| t < horizon));
    }
    if horizon > 0 {
        times.push(horizon);
    }
    times
}

/// A single urn run to be simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnConfig {
    pub coins: Vec<f64>,
    pub schedule: RewardSchedule,
    pub horizon: u64,
    /// Investors whose shares are recorded at each snapshot.
    pub tracked: Vec<usize>,
    #[serde(default)]
    pub stride: u64,
    #[serde(default)]
    pub record_selections: bool,
}

impl UrnConfig {
    pub fn new(coins: Vec<f64>, schedule: RewardSchedule, horizon: u64) -> Self {
        Self {
            coins,
            schedule,
            horizon,
            tracked: vec![0],
            stride: 0,
            record_selections: false,
        }
    }

    pub fn tracked(mut self, tracked: Vec<usize>) -> Self {
        self.tracked = tracked;
        self
    }

    pub fn stride(mut self, stride: u64) -> Self {
        self.stride = stride;
        self
    }

    pub fn record_selections(mut self, yes: bool) -> Self {
        self.record_selections = yes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        UrnState::new(self.coins.clone())?;
        if let Some(&k) = self.tracked.iter().find(|&&k| k >= self.coins.len()) {
            return Err(Error::invalid(format!(
                "tracked index {k} out of range for {} investors",
                self.coins.len()
            )));
        }
        Ok(())
    }

    pub fn initial_supply(&self) -> f64 {
        self.coins.iter().sum()
    }

    pub fn reward_path(&self) -> Result<RewardPath> {
        RewardPath::new(&self.schedule, self.initial_supply(), self.horizon)
    }

    pub fn snapshot_times(&self) -> Vec<u64> {
        snapshot_times(self.horizon, self.stride)
    }
}

/// Recorded output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S = UrnState> {
    pub times: Vec<u64>,
    pub tracked: Vec<usize>,
    /// `shares[i][j]` is the share of `tracked[i]` at `times[j]`.
    pub shares: Vec<Vec<f64>>,
    pub final_state: S,
    pub selections: Option<Vec<u32>>,
    /// Step at which the supply overflowed; later snapshots repeat the last state.
    pub truncated_at: Option<u64>,
}

impl<S> Trajectory<S> {
    pub fn terminal_share(&self, i: usize) -> f64 {
        *self.shares[i]
            .last()
            .expect("at least the initial snapshot")
    }
}

/// Runs the urn along `path`, calling `observe(j, state)` at each snapshot time
/// `times[j]` and `on_select(k)` after every step. Returns the overflow step if the
/// path ended before the last snapshot.
pub(crate) fn drive(
    state: &mut UrnState,
    path: &RewardPath,
    times: &[u64],
    rng: &mut SimRng,
    mut observe: impl FnMut(usize, &UrnState),
    mut on_select: impl FnMut(usize),
) -> Option<u64> {
    let available = path.len();
    for (j, &time) in times.iter().enumerate() {
        let stop = time.min(available);
        while state.t < stop {
            let reward = path.reward(state.t + 1);
            let u: f64 = rng.random();
            on_select(state.step_with_reward(reward, u));
        }
        observe(j, state);
    }
    match (path.overflow_step(), times.last()) {
        (Some(step), Some(&last)) if last >= step => Some(step),
        _ => None,
    }
}

/// Simulates one run from `seed`.
pub fn simulate(config: &UrnConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    let path = config.reward_path()?;
    Ok(simulate_on_path(
        config,
        &path,
        &config.snapshot_times(),
        seed,
    ))
}

fn simulate_on_path(config: &UrnConfig, path: &RewardPath, times: &[u64], seed: u64) -> Trajectory {
    let mut state = UrnState::new(config.coins.clone()).expect("validated");
    let mut rng = rng::stream(seed);
    let mut shares = vec![Vec::with_capacity(times.len()); config.tracked.len()];
    let mut selections = config.record_selections.then(Vec::new);
    let truncated_at = drive(
        &mut state,
        path,
        times,
        &mut rng,
        |_, s| {
            for (series, &k) in shares.iter_mut().zip(&config.tracked) {
                series.push(s.share(k));
            }
        },
        |k| {
            if let Some(log) = selections.as_mut() {
                log.push(k as u32);
            }
        },
    );
    Trajectory {
        times: times.to_vec(),
        tracked: config.tracked.clone(),
        shares,
        final_state: state,
        selections,
        truncated_at,
    }
}

/// A Monte Carlo ensemble of independent runs of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub urn: UrnConfig,
    pub replicates: u64,
    pub seed: u64,
    /// Deviation thresholds `ε` for the events `|π_{k,t}/π_{k,0} − 1| > ε`.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Keep every replicate's terminal share (needed for histograms and KS).
    #[serde(default = "default_true")]
    pub keep_terminal: bool,
}

fn default_true() -> bool {
    true
}

/// Per-investor statistics across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedSeries {
    pub index: usize,
    pub initial_share: f64,
    /// Mean and variance of the share at each snapshot.
    pub moments: Vec<MeanVar>,
    /// `exceedances[e][j]`: replicates with `|ratio − 1| > thresholds[e]` at `times[j]`.
    pub exceedances: Vec<Vec<u64>>,
    /// Terminal shares in replicate order (empty unless requested).
    pub terminal: Vec<f64>,
}

impl TrackedSeries {
    /// Terminal ratios `π_{k,T}/π_{k,0}`.
    pub fn terminal_ratios(&self) -> Vec<f64> {
        self.terminal
            .iter()
            .map(|s| s / self.initial_share)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub replicates: u64,
    pub times: Vec<u64>,
    pub thresholds: Vec<f64>,
    pub tracked: Vec<TrackedSeries>,
    /// Replicates whose supply overflowed before the horizon.
    pub truncated: u64,
}

impl EnsembleSummary {
    pub fn exceedance_fraction(&self, tracked: usize, threshold: usize, snapshot: usize) -> f64 {
        self.tracked[tracked].exceedances[threshold][snapshot] as f64 / self.replicates as f64
    }

    /// `max_t P(|π_{k,t}/π_{k,0} − 1| > ε)` over the snapshot times, with the time
    /// at which it is attained (earliest on ties).
    pub fn p_max(&self, tracked: usize, threshold: usize) -> (f64, u64) {
        let counts = &self.tracked[tracked].exceedances[threshold];
        let (j, &c) =
            counts
                .iter()
                .enumerate()
                .fold((0, &0), |best, cur| if cur.1 > best.1 { cur } else { best });
        (c as f64 / self.replicates as f64, self.times[j])
    }
}

/// Shifted sums of one tracked series over a block of replicates.
#[derive(Debug, Clone)]
pub(crate) struct SeriesBlock {
    shift: f64,
    count: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    exceed: Vec<Vec<u64>>,
    terminal: Vec<f64>,
}

impl SeriesBlock {
    pub(crate) fn new(shift: f64, snapshots: usize, thresholds: usize) -> Self {
        Self {
            shift,
            count: 0,
            sum: vec![0.0; snapshots],
            sum_sq: vec![0.0; snapshots],
            exceed: vec![vec![0; snapshots]; thresholds],
            terminal: Vec::new(),
        }
    }

    /// Records `value` at snapshot `j` and counts threshold exceedances of
    /// `|value/shift − 1|`.
    pub(crate) fn record(&mut self, j: usize, value: f64, thresholds: &[f64]) {
        let d = value - self.shift;
        self.sum[j] += d;
        self.sum_sq[j] += d * d;
        let dev = (value / self.shift - 1.0).abs();
        for (e, &eps) in thresholds.iter().enumerate() {
            if dev > eps {
                self.exceed[e][j] += 1;
            }
        }
    }

    pub(crate) fn finish_replicate(&mut self, terminal: Option<f64>) {
        self.count += 1;
        if let Some(x) = terminal {
            self.terminal.push(x);
        }
    }
}

/// Combines blocks in order into per-snapshot moments, exceedance counts and terminals.
pub(crate) fn merge_series(blocks: Vec<SeriesBlock>) -> (Vec<MeanVar>, Vec<Vec<u64>>, Vec<f64>) {
    let mut iter = blocks.into_iter();
    let Some(first) = iter.next() else {
        return (Vec::new(), Vec::new(), Vec::new());
    };
    let to_moments = |b: &SeriesBlock| -> Vec<MeanVar> {
        (0..b.sum.len())
            .map(|j| MeanVar::from_shifted_sums(b.count, b.shift, b.sum[j], b.sum_sq[j]))
            .collect()
    };
    let mut moments = to_moments(&first);
    let mut exceed = first.exceed;
    let mut terminal = first.terminal;
    for block in iter {
        for (m, b) in moments.iter_mut().zip(to_moments(&block)) {
            *m = m.merge(&b);
        }
        for (acc, add) in exceed.iter_mut().zip(&block.exceed) {
            for (a, b) in acc.iter_mut().zip(add) {
                *a += b;
            }
        }
        terminal.extend(block.terminal);
    }
    (moments, exceed, terminal)
}

/// Runs `config.replicates` independent runs with seeds
/// `rng::replicate_seed(config.seed, i)` and aggregates the tracked shares.
///
/// Work is spread over the current rayon pool; the result does not depend on it.
pub fn ensemble(config: &EnsembleConfig) -> Result<EnsembleSummary> {
    let urn = &config.urn;
    urn.validate()?;
    if config.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    if let Some(e) = config.thresholds.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::invalid(format!(
            "thresholds must be positive, got {e}"
        )));
    }
    let path = urn.reward_path()?;
    let times = urn.snapshot_times();
    let supply = urn.initial_supply();
    let initial: Vec<f64> = urn.tracked.iter().map(|&k| urn.coins[k] / supply).collect();
    let thresholds = &config.thresholds;

    let blocks = rng::map_blocks(config.replicates, |range| {
        let mut series: Vec<SeriesBlock> = initial
            .iter()
            .map(|&p| SeriesBlock::new(p, times.len(), thresholds.len()))
            .collect();
        let mut truncated = 0u64;
        for i in range {
            let mut state = UrnState::new(urn.coins.clone()).expect("validated");
            let mut stream = rng::replicate_stream(config.seed, i);
            let cut = drive(
                &mut state,
                &path,
                &times,
                &mut stream,
                |j, s| {
                    for (block, &k) in series.iter_mut().zip(&urn.tracked) {
                        block.record(j, s.share(k), thresholds);
                    }
                },
                |_| {},
            );
            truncated += u64::from(cut.is_some());
            for (block, &k) in series.iter_mut().zip(&urn.tracked) {
                block.finish_replicate(config.keep_terminal.then(|| state.share(k)));
            }
        }
        (series, truncated)
    });

    let truncated = blocks.iter().map(|b| b.1).sum();
    let mut per_tracked: Vec<Vec<SeriesBlock>> = vec![Vec::new(); initial.len()];
    for (series, _) in blocks {
        for (slot, block) in per_tracked.iter_mut().zip(series) {
            slot.push(block);
        }
    }
    let tracked = per_tracked
        .into_iter()
        .zip(urn.tracked.iter().zip(&initial))
        .map(|(blocks, (&index, &initial_share))| {
            let (moments, exceedances, terminal) = merge_series(blocks);
            TrackedSeries {
                index,
                initial_share,
                moments,
                exceedances,
                terminal,
            }
        })
        .collect();
    Ok(EnsembleSummary {
        replicates: config.replicates,
        times,
        thresholds: thresholds.clone(),
        tracked,
        truncated,
    })
}
