//! Incumbent investors diluted by newcomers.
//!
//! At each step an incumbent `k` is selected with probability `n_{k,t}/(N_t + θ)`, a
//! newcomer already holding coins with probability proportional to its holdings, and
//! a brand-new investor (a fresh point of `[0, 1]`) with probability `θ/(N_t + θ)`.
//! The dilution weight `θ` affects selection only; it is not part of the supply.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infinite_pop::{AtomLedger, DiffuseSpec, Feature, InverseCdf};
use crate::rng::{self, SimRng};
use crate::schedule::{RewardPath, RewardSchedule};
use crate::stats::{CompensatedSum, MeanVar};
use crate::urn::{merge_series, select_by_mass, snapshot_times, SeriesBlock, TrackedSeries};

/// Who received the reward at a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynSelection {
    Incumbent(usize),
    /// A newcomer that already held coins, by appearance order.
    Atom(usize),
    /// A newcomer entering at this step.
    Fresh(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynState {
    pub t: u64,
    pub incumbents: Vec<f64>,
    pub incumbent_total: f64,
    pub newcomers: AtomLedger,
    pub theta: f64,
    /// `N_t`: incumbent coins plus newcomer coins.
    pub supply: f64,
}

impl DynState {
    pub fn new(coins: Vec<f64>, theta: f64) -> Result<Self> {
        if coins.is_empty() || coins.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("incumbent coins must be positive"));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::invalid(format!(
                "dilution must be nonnegative, got {theta}"
            )));
        }
        let total: f64 = coins.iter().sum();
        Ok(Self {
            t: 0,
            incumbents: coins,
            incumbent_total: total,
            newcomers: AtomLedger::new(),
            theta,
            supply: total,
        })
    }

    pub fn share(&self, k: usize) -> f64 {
        self.incumbents[k] / self.supply
    }

    /// Combined share of all newcomers, `1 − Σ_k π_{k,t}`.
    pub fn newcomer_share(&self) -> f64 {
        (self.supply - self.incumbent_total) / self.supply
    }

    /// Probability that the next step brings in a new investor.
    pub fn fresh_probability(&self) -> f64 {
        self.theta / (self.supply + self.theta)
    }

    /// One step paying `reward`. `u_select` picks among incumbents (ascending), then
    /// newcomers (appearance order), then the fresh region; `u_fresh` is called only
    /// when a new investor enters.
    pub fn step(
        &mut self,
        reward: f64,
        base: &dyn InverseCdf,
        u_select: f64,
        u_fresh: impl FnOnce() -> f64,
    ) -> DynSelection {
        let mut target = u_select * (self.supply + self.theta);
        let selection = if target < self.incumbent_total {
            let k = select_by_mass(&self.incumbents, target);
            self.incumbents[k] += reward;
            self.incumbent_total += reward;
            DynSelection::Incumbent(k)
        } else {
            target -= self.incumbent_total;
            let held = self.supply - self.incumbent_total;
            if target < held && !self.newcomers.features.is_empty() {
                let j = select_by_mass(&self.newcomers.rewards, target);
                self.newcomers
                    .record(self.newcomers.features[j], reward, false);
                DynSelection::Atom(j)
            } else if self.theta == 0.0 {
                // Only reachable through rounding at the top of the incumbent range.
                let k = self.incumbents.len() - 1;
                self.incumbents[k] += reward;
                self.incumbent_total += reward;
                DynSelection::Incumbent(k)
            } else {
                let x = base.quantile(u_fresh());
                self.newcomers.record(Feature::Point(x), reward, true);
                DynSelection::Fresh(x)
            }
        };
        self.supply += reward;
        self.t += 1;
        if matches!(selection, DynSelection::Incumbent(_)) {
            self.newcomers.t = self.t;
        }
        selection
    }
}

/// Whether `E[π_{k,∞}]` is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitClass {
    Positive,
    Zero,
    Undetermined,
}

/// Truncated expected-limit product with a certified remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRatio {
    /// `Π_{t<T} (1 − θ R_{t+1}/(N_{t+1}(N_t + θ)))`, i.e. `E[π_{k,T}]/π_{k,0}`.
    pub value: f64,
    /// `θ/(N_T + θ)`: the remaining factors multiply to at least `1 − tail_bound`.
    pub tail_bound: f64,
    /// `value · (1 − tail_bound)`, a lower bound on `E[π_{k,∞}]/π_{k,0}`.
    pub lower: f64,
    /// Classification certified by `lower`.
    pub classification: LimitClass,
    /// Classification by reward regime: zero for `R_t = Θ(t^{−α})`, `α > 1`,
    /// undetermined at `α = 1`, positive otherwise.
    pub regime_classification: LimitClass,
    /// Steps actually multiplied (less than requested if the supply overflowed).
    pub steps: u64,
}

/// Evaluates the expected-limit product up to `horizon` steps.
///
/// Each factor equals `g(N_t)/g(N_{t+1})` with `g(x) = x/(x + θ)`, so the factors
/// beyond the horizon multiply to `g(N_T)/g(N_∞) ≥ N_T/(N_T + θ)` whatever the
/// schedule. The product itself is accumulated factor by factor.
pub fn expected_limit_ratio(
    schedule: &RewardSchedule,
    n: f64,
    theta: f64,
    horizon: u64,
) -> Result<LimitRatio> {
    if !(theta >= 0.0) {
        return Err(Error::invalid("dilution must be nonnegative"));
    }
    let path = RewardPath::new(schedule, n, horizon)?;
    let mut log = CompensatedSum::default();
    for t in 0..path.len() {
        let x = theta * path.reward(t + 1) / (path.supply(t + 1) * (path.supply(t) + theta));
        log.add((-x).ln_1p());
    }
    let value = log.value().exp();
    let n_t = path.supply(path.len());
    let tail_bound = theta / (n_t + theta);
    let lower = value * (1.0 - tail_bound);
    let classification = if lower > 0.0 {
        LimitClass::Positive
    } else {
        LimitClass::Undetermined
    };
    let regime_classification = match *schedule {
        RewardSchedule::PowerDecay { alpha, floor, .. } if floor == 0.0 && alpha > 1.0 => {
            LimitClass::Zero
        }
        RewardSchedule::PowerDecay { alpha, floor, .. } if floor == 0.0 && alpha == 1.0 => {
            LimitClass::Undetermined
        }
        _ => LimitClass::Positive,
    };
    Ok(LimitRatio {
        value,
        tail_bound,
        lower,
        classification,
        regime_classification,
        steps: path.len(),
    })
}

/// Configuration of a dilution ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynConfig {
    pub coins: Vec<f64>,
    pub theta: f64,
    pub schedule: RewardSchedule,
    pub horizon: u64,
    #[serde(default)]
    pub stride: u64,
    pub tracked: Vec<usize>,
    #[serde(default = "uniform")]
    pub base: DiffuseSpec,
}

fn uniform() -> DiffuseSpec {
    DiffuseSpec::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynSummary {
    pub replicates: u64,
    pub times: Vec<u64>,
    pub tracked: Vec<TrackedSeries>,
    /// Combined newcomer share at each snapshot.
    pub newcomer_share: Vec<MeanVar>,
    pub newcomer_terminal: Vec<f64>,
    /// `E[π_{k,t}]/π_{k,0}` from the product formula at each snapshot.
    pub predicted_ratio: Vec<f64>,
    pub truncated: u64,
}

fn run_dyn(
    config: &DynConfig,
    path: &RewardPath,
    times: &[u64],
    rng: &mut SimRng,
    mut observe: impl FnMut(usize, &DynState),
) -> (DynState, bool) {
    let mut state = DynState::new(config.coins.clone(), config.theta).expect("validated");
    for (j, &time) in times.iter().enumerate() {
        while state.t < time.min(path.len()) {
            let reward = path.reward(state.t + 1);
            let u: f64 = rng.random();
            state.step(reward, &config.base, u, || rng.random());
        }
        observe(j, &state);
    }
    let truncated = path
        .overflow_step()
        .is_some_and(|s| times.last().is_some_and(|&l| l >= s));
    (state, truncated)
}

/// One dilution run, returning the state after `horizon` steps.
pub fn simulate_dynamical(config: &DynConfig, seed: u64) -> Result<DynState> {
    validate(config)?;
    let path = RewardPath::new(&config.schedule, config.coins.iter().sum(), config.horizon)?;
    Ok(run_dyn(
        config,
        &path,
        &[config.horizon],
        &mut rng::stream(seed),
        |_, _| {},
    )
    .0)
}

fn validate(config: &DynConfig) -> Result<()> {
    DynState::new(config.coins.clone(), config.theta)?;
    config.schedule.validate()?;
    if config.tracked.iter().any(|&k| k >= config.coins.len()) {
        return Err(Error::invalid("tracked incumbent out of range"));
    }
    Ok(())
}

/// Independent dilution runs with seeds `rng::replicate_seed(seed, i)`.
pub fn dyn_ensemble(config: &DynConfig, replicates: u64, seed: u64) -> Result<DynSummary> {
    validate(config)?;
    if replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    let n: f64 = config.coins.iter().sum();
    let path = RewardPath::new(&config.schedule, n, config.horizon)?;
    let times = snapshot_times(config.horizon, config.stride);
    let initial: Vec<f64> = config
        .tracked
        .iter()
        .map(|&k| config.coins[k] / n)
        .collect();

    let blocks = rng::map_blocks(replicates, |range| {
        let mut series: Vec<SeriesBlock> = initial
            .iter()
            .map(|&p| SeriesBlock::new(p, times.len(), 0))
            .collect();
        let mut fresh = SeriesBlock::new(0.0, times.len(), 0);
        let mut truncated = 0u64;
        for i in range {
            let mut stream = rng::replicate_stream(seed, i);
            let (state, cut) = run_dyn(config, &path, &times, &mut stream, |j, s| {
                for (block, &k) in series.iter_mut().zip(&config.tracked) {
                    block.record(j, s.share(k), &[]);
                }
                fresh.record(j, s.newcomer_share(), &[]);
            });
            truncated += u64::from(cut);
            for (block, &k) in series.iter_mut().zip(&config.tracked) {
                block.finish_replicate(Some(state.share(k)));
            }
            fresh.finish_replicate(Some(state.newcomer_share()));
        }
        (series, fresh, truncated)
    });

    let truncated = blocks.iter().map(|b| b.2).sum();
    let mut per_tracked: Vec<Vec<SeriesBlock>> = vec![Vec::new(); initial.len()];
    let mut fresh_blocks = Vec::new();
    for (series, fresh, _) in blocks {
        for (slot, b) in per_tracked.iter_mut().zip(series) {
            slot.push(b);
        }
        fresh_blocks.push(fresh);
    }
    let tracked = per_tracked
        .into_iter()
        .zip(config.tracked.iter().zip(&initial))
        .map(|(b, (&index, &initial_share))| {
            let (moments, exceedances, terminal) = merge_series(b);
            TrackedSeries {
                index,
                initial_share,
                moments,
                exceedances,
                terminal,
            }
        })
        .collect();
    let (newcomer_share, _, newcomer_terminal) = merge_series(fresh_blocks);

    let mut log = CompensatedSum::default();
    let mut predicted = Vec::with_capacity(times.len());
    let mut t = 0;
    for &time in &times {
        while t < time.min(path.len()) {
            let x = config.theta * path.reward(t + 1)
                / (path.supply(t + 1) * (path.supply(t) + config.theta));
            log.add((-x).ln_1p());
            t += 1;
        }
        predicted.push(log.value().exp());
    }
    Ok(DynSummary {
        replicates,
        times,
        tracked,
        newcomer_share,
        newcomer_terminal,
        predicted_ratio: predicted,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn::{self, UrnConfig};

    #[test]
    fn first_entry_probability() {
        let s = DynState::new(vec![5.0, 5.0], 1.0).unwrap();
        assert!((s.fresh_probability() - 1.0 / 11.0).abs() < 1e-16);
    }

    #[test]
    fn one_step_mean_is_the_product_factor() {
        // Exact conditional mean of an incumbent share after one step.
        let (n, theta, r, nk): (f64, f64, f64, f64) = (10.0, 1.0, 1.0, 5.0);
        let p_hit = nk / (n + theta);
        let mean = p_hit * (nk + r) / (n + r) + (1.0 - p_hit) * nk / (n + r);
        let factor = n * (n + r + theta) / ((n + r) * (n + theta));
        assert!((mean - nk / n * factor).abs() < 1e-16);
        assert!(mean < nk / n);
    }

    #[test]
    fn constant_reward_product_telescopes() {
        let lr = expected_limit_ratio(&RewardSchedule::constant(1.0), 10.0, 1.0, 50_000).unwrap();
        let n_t = 10.0 + 50_000.0;
        let closed = 10.0 / 11.0 * (n_t + 1.0) / n_t;
        assert!((lr.value - closed).abs() < 1e-12 * closed);
        assert!(lr.lower <= 10.0 / 11.0 && 10.0 / 11.0 <= lr.value);
        let none = expected_limit_ratio(&RewardSchedule::constant(1.0), 10.0, 0.0, 100).unwrap();
        assert_eq!(none.value, 1.0);
    }

    #[test]
    fn fast_decay_is_labelled_zero_but_certified_positive() {
        let s = RewardSchedule::power_decay(1.0, 2.0);
        let a = expected_limit_ratio(&s, 10.0, 1.0, 1_000).unwrap();
        let b = expected_limit_ratio(&s, 10.0, 1.0, 100_000).unwrap();
        assert_eq!(a.regime_classification, LimitClass::Zero);
        assert!(b.value < a.value);
        assert!(b.value >= a.lower);
        assert_eq!(b.classification, LimitClass::Positive);
    }

    #[test]
    fn zero_dilution_matches_the_finite_urn() {
        let coins = vec![1.0, 2.0, 3.0];
        let sched = RewardSchedule::power_decay(1.0, 0.6);
        let cfg = DynConfig {
            coins: coins.clone(),
            theta: 0.0,
            schedule: sched,
            horizon: 2000,
            stride: 0,
            tracked: vec![0],
            base: DiffuseSpec::Uniform,
        };
        for seed in 0..5 {
            let d = simulate_dynamical(&cfg, seed).unwrap();
            let u = urn::simulate(&UrnConfig::new(coins.clone(), sched, 2000), seed).unwrap();
            assert_eq!(d.incumbents, u.final_state.coins());
            assert_eq!(d.newcomers.distinct(), 0);
        }
    }

    #[test]
    fn supply_is_incumbents_plus_newcomers() {
        let cfg = DynConfig {
            coins: vec![2.0, 3.0],
            theta: 4.0,
            schedule: RewardSchedule::floor_decay(1.0, 1.0, 0.99),
            horizon: 5000,
            stride: 0,
            tracked: vec![0],
            base: DiffuseSpec::Uniform,
        };
        let s = simulate_dynamical(&cfg, 3).unwrap();
        let held: f64 = s.newcomers.rewards.iter().sum();
        let total = s.incumbents.iter().sum::<f64>() + held;
        assert!((total - s.supply).abs() < 1e-10 * s.supply);
        assert!(s.newcomers.distinct() > 0);
        assert_eq!(s.newcomers.collisions, 0);
    }
}
