//! Acceptance checks, grouped into suites and run with fixed seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, Result};
use serde::Serialize;
use stakelab::dynamical::{dyn_ensemble, expected_limit_ratio, DynConfig, LimitClass};
use stakelab::infinite_pop::{exchangeability_defect, feature_ensemble, DiffuseSpec};
use stakelab::limit_laws::{ks_distance, LimitLaw};
use stakelab::moments::{self, raw_moment_table};
use stakelab::rng::child_seed;
use stakelab::stats::{self, MeanVar};
use stakelab::urn::{ensemble, EnsembleConfig, EnsembleSummary, UrnConfig};
use stakelab::RewardSchedule;

use crate::config::scale_count;
use crate::oracle;

/// Signature of the `a_t` computation under test, injectable for mutation checks.
pub type ASequence = fn(&RewardSchedule, f64, u64) -> stakelab::Result<Vec<f64>>;

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub seed: u64,
    /// Multiplies every replicate count.
    pub scale: f64,
    pub a_sequence: ASequence,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            scale: 1.0,
            a_sequence: moments::a_sequence,
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl CheckOptions {
    fn replicates(&self, count: u64) -> u64 {
        scale_count(count, self.scale)
    }
}

fn num(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
        format!("{x:.4e}")
    } else {
        format!("{}", (x * 1e6).round() / 1e6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub item: String,
    pub measured: f64,
    pub tolerance: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Measurement {
    fn at_most(item: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            item: item.into(),
            measured,
            tolerance: format!("<= {}", num(limit)),
            passed: measured <= limit,
            note: None,
        }
    }

    fn above(item: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            item: item.into(),
            measured,
            tolerance: format!("> {}", num(limit)),
            passed: measured > limit,
            note: None,
        }
    }

    fn within(item: impl Into<String>, measured: f64, target: f64, tol: f64) -> Self {
        Self {
            item: item.into(),
            measured,
            tolerance: format!("{} +- {}", num(target), num(tol)),
            passed: (measured - target).abs() <= tol,
            note: None,
        }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub suite: &'static str,
    pub title: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
}

impl CriterionReport {
    /// One line: id, verdict and the measurements.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "criterion {:>2} [{}] {}: {}",
            self.id,
            self.suite,
            self.title,
            if self.passed { "PASS" } else { "FAIL" }
        );
        for m in &self.measurements {
            let mark = if m.passed { "ok" } else { "FAILED" };
            let _ = write!(
                s,
                "; {} = {} ({}, {mark})",
                m.item,
                num(m.measured),
                m.tolerance
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub seed: u64,
    pub scale: f64,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

pub trait Criterion: Send + Sync {
    fn id(&self) -> u32;
    fn suite(&self) -> &'static str;
    fn title(&self) -> &'static str;
    fn measure(&self, opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>>;

    fn run(&self, opts: &CheckOptions) -> Result<CriterionReport> {
        let seed = child_seed(opts.seed, &[u64::from(self.id())]);
        let measurements = self.measure(opts, seed)?;
        Ok(CriterionReport {
            id: self.id(),
            suite: self.suite(),
            title: self.title(),
            seed,
            passed: measurements.iter().all(|m| m.passed),
            measurements,
        })
    }
}

struct Check {
    id: u32,
    suite: &'static str,
    title: &'static str,
    measure: fn(&CheckOptions, u64) -> Result<Vec<Measurement>>,
}

impl Criterion for Check {
    fn id(&self) -> u32 {
        self.id
    }

    fn suite(&self) -> &'static str {
        self.suite
    }

    fn title(&self) -> &'static str {
        self.title
    }

    fn measure(&self, opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
        (self.measure)(opts, seed)
    }
}

pub const SUITES: [&str; 5] = ["oracle", "bounds", "limits", "dilution", "all"];

pub struct CriterionRegistry {
    entries: BTreeMap<u32, Box<dyn Criterion>>,
}

impl CriterionRegistry {
    pub fn builtin() -> Self {
        let checks = [
            Check {
                id: 1,
                suite: "oracle",
                title: "exact moments against closed forms and path enumeration",
                measure: exact_moments,
            },
            Check {
                id: 2,
                suite: "bounds",
                title: "constant reward deviation bound covers P_max",
                measure: constant_bound,
            },
            Check {
                id: 3,
                suite: "limits",
                title: "medium investor ratio is Gamma distributed",
                measure: gamma_limit,
            },
            Check {
                id: 4,
                suite: "limits",
                title: "small investors get poorer as N grows",
                measure: poor_get_poorer,
            },
            Check {
                id: 5,
                suite: "bounds",
                title: "decreasing reward deviation bounds",
                measure: decreasing_bounds,
            },
            Check {
                id: 6,
                suite: "limits",
                title: "geometric reward absorbs at 0 or 1",
                measure: chaotic_centralization,
            },
            Check {
                id: 7,
                suite: "limits",
                title: "distinct features grow like (N/R) log T",
                measure: feature_growth,
            },
            Check {
                id: 8,
                suite: "dilution",
                title: "incumbent shares under dilution",
                measure: dilution,
            },
            Check {
                id: 9,
                suite: "oracle",
                title: "constant reward selections are exchangeable",
                measure: exchangeable,
            },
        ];
        let mut entries: BTreeMap<u32, Box<dyn Criterion>> = BTreeMap::new();
        for c in checks {
            entries.insert(c.id, Box::new(c));
        }
        Self { entries }
    }

    pub fn register(&mut self, c: Box<dyn Criterion>) {
        self.entries.insert(c.id(), c);
    }

    /// Criteria of `suite` in id order; `all` selects every criterion.
    pub fn suite(&self, suite: &str) -> Result<Vec<&dyn Criterion>> {
        if !SUITES.contains(&suite) {
            return Err(anyhow!(
                "unknown suite `{suite}` (known: {})",
                SUITES.join(", ")
            ));
        }
        Ok(self
            .entries
            .values()
            .filter(|c| suite == "all" || c.suite() == suite)
            .map(|c| c.as_ref())
            .collect())
    }

    pub fn run(&self, suite: &str, opts: &CheckOptions) -> Result<CheckReport> {
        let criteria = self
            .suite(suite)?
            .into_iter()
            .map(|c| c.run(opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(CheckReport {
            suite: suite.into(),
            seed: opts.seed,
            scale: opts.scale,
            passed: criteria.iter().all(|c| c.passed),
            criteria,
        })
    }
}

fn urn_run(
    coins: Vec<f64>,
    schedule: RewardSchedule,
    horizon: u64,
    stride: u64,
    replicates: u64,
    eps: f64,
    seed: u64,
) -> Result<EnsembleSummary> {
    Ok(ensemble(&EnsembleConfig {
        urn: UrnConfig::new(coins, schedule, horizon)
            .tracked(vec![0])
            .stride(stride),
        replicates,
        seed,
        thresholds: vec![eps],
        keep_terminal: true,
    })?)
}

fn exact_moments(opts: &CheckOptions, _: u64) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    let constant = RewardSchedule::constant(1.0);
    for n in [2.0, 100.0, 1e4] {
        let a = (opts.a_sequence)(&constant, n, 100_000)?;
        for pi0 in [0.5, 0.01] {
            let mut worst: f64 = if a.len() == 100_000 {
                0.0
            } else {
                f64::INFINITY
            };
            for (i, at) in a.iter().enumerate() {
                let exact = oracle::constant_reward_variance(1.0, n, i as u64 + 1, pi0);
                worst = worst.max((at * pi0 * (1.0 - pi0) - exact).abs() / exact);
            }
            out.push(Measurement::at_most(
                format!(
                    "a_t recursion vs closed-form variance, N={n}, pi0={pi0}, t<=1e5 (max rel err)"
                ),
                worst,
                1e-12,
            ));
        }
    }
    for (label, s) in [
        ("constant", constant),
        ("power_decay_0.6", RewardSchedule::power_decay(1.0, 0.6)),
    ] {
        let mut worst: f64 = 0.0;
        for coins in [[1.0, 1.0], [1.0, 3.0], [2.5, 0.5]] {
            let n = coins[0] + coins[1];
            let table = raw_moment_table(&s, n, coins[0] / n, 12)?;
            for t in 1..=12u32 {
                let exact = oracle::enumerate_raw_moments(&s, coins, t)?;
                for (m, e) in table.rows[t as usize].raw.iter().zip(exact) {
                    worst = worst.max((m - e).abs() / e.abs());
                }
            }
        }
        out.push(Measurement::at_most(
            format!("raw moments 1-4 vs 2^T path enumeration, {label}, T<=12 (max rel err)"),
            worst,
            1e-12,
        ));
    }
    let cases = [
        (
            "constant N=1e4 pi0=0.01",
            RewardSchedule::constant(1.0),
            1e4,
            0.01,
            100_000,
        ),
        (
            "floor_decay N=1700",
            RewardSchedule::floor_decay(1.0, 1.0, 0.999),
            1700.0,
            0.5,
            50_000,
        ),
        (
            "power_decay_0.6 N=100",
            RewardSchedule::power_decay(1.0, 0.6),
            100.0,
            0.5,
            50_000,
        ),
        (
            "proportional_0.1 N=100",
            RewardSchedule::proportional(1.0, 0.1),
            100.0,
            0.3,
            50_000,
        ),
    ];
    for (label, s, n, pi0, horizon) in cases {
        let (r3, r4) = oracle::central_step_residuals(&raw_moment_table(&s, n, pi0, horizon)?);
        out.push(Measurement::at_most(
            format!("third central moment step identity, {label}"),
            r3,
            1e-10,
        ));
        out.push(Measurement::at_most(
            format!("fourth central moment step identity, {label}"),
            r4,
            1e-10,
        ));
    }
    Ok(out)
}

fn constant_bound(opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
    let s = RewardSchedule::constant(1.0);
    let mut out = Vec::new();
    for n in [1000.0, 4000.0, 10000.0] {
        let e = urn_run(
            vec![n / 2.0, n / 2.0],
            s,
            50_000,
            50,
            opts.replicates(10_000),
            0.05,
            child_seed(seed, &[n.to_bits()]),
        )?;
        let bound = moments::concentration_bound(&s, n, n / 2.0, 0.05)?;
        out.push(Measurement::at_most(
            format!("P_max at N={n}"),
            e.p_max(0, 0).0,
            bound,
        ));
        if n == 10000.0 {
            out.push(Measurement::within("bound at N=10000", bound, 0.1, 1e-12));
            out.push(Measurement::at_most(
                "P_max at N=10000 against 0.1",
                e.p_max(0, 0).0,
                0.1,
            ));
        }
    }
    Ok(out)
}

fn gamma_limit(opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
    let exp1 = LimitLaw::gamma_ratio(1.0, 1.0);
    let mut ks = Vec::new();
    let mut spot = 0.0;
    for n in [100.0, 200.0] {
        let e = urn_run(
            vec![1.0, n - 1.0],
            RewardSchedule::constant(1.0),
            50_000,
            0,
            opts.replicates(10_000),
            0.05,
            child_seed(seed, &[n.to_bits()]),
        )?;
        let ratios = e.tracked[0].terminal_ratios();
        ks.push(ks_distance(&ratios, |x| exp1.cdf(x).unwrap()));
        if n == 100.0 {
            spot = stats::fraction(&ratios, |r| r > 2.0);
        }
    }
    Ok(vec![
        Measurement::at_most("KS distance to Exponential(1), N=100", ks[0], 0.05),
        Measurement::at_most("KS increase from N=100 to N=200", ks[1] - ks[0], 0.02),
        Measurement::within("P(ratio > 2), N=100", spot, (-2.0f64).exp(), 0.02),
    ])
}

fn poor_get_poorer(opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
    let mut below = Vec::new();
    let mut var = Vec::new();
    for n in [100.0f64, 300.0] {
        let n0 = n.powf(-1.1);
        let e = urn_run(
            vec![n0, n - n0],
            RewardSchedule::constant(1.0),
            50_000,
            0,
            opts.replicates(10_000),
            0.05,
            child_seed(seed, &[n.to_bits()]),
        )?;
        let ratios = e.tracked[0].terminal_ratios();
        below.push(stats::fraction(&ratios, |r| r < 0.05));
        var.push(MeanVar::from_slice(&ratios).variance());
    }
    Ok(vec![
        Measurement::above(
            "P(ratio < 0.05) increase from N=100 to N=300",
            below[1] - below[0],
            0.0,
        )
        .with_note(format!("N=100: {}, N=300: {}", below[0], below[1])),
        Measurement::above("P(ratio < 0.05) at N=300", below[1], 0.5),
        Measurement::above(
            "var(ratio) increase from N=100 to N=300",
            var[1] - var[0],
            0.0,
        )
        .with_note(format!("N=100: {}, N=300: {}", var[0], var[1])),
    ])
}

fn decreasing_bounds(opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    let reps = opts.replicates(10_000);
    let explicit = [
        (
            "floor_decay",
            RewardSchedule::floor_decay(1.0, 1.0, 0.999),
            [1700.0, 10700.0],
            true,
        ),
        (
            "power_decay_0.6",
            RewardSchedule::power_decay(1.0, 0.6),
            [2000.0, 11000.0],
            false,
        ),
    ];
    for (label, s, grid, half) in explicit {
        for n in grid {
            let n0 = if half { n / 2.0 } else { 1.0 };
            let e = urn_run(
                vec![n0, n - n0],
                s,
                50_000,
                50,
                reps,
                0.05,
                child_seed(seed, &[n.to_bits(), half as u64]),
            )?;
            let bound = moments::concentration_bound(&s, n, n0, 0.05)?;
            out.push(Measurement::at_most(
                format!("P_max {label} N={n}"),
                e.p_max(0, 0).0,
                bound,
            ));
        }
    }
    let alpha = 0.1;
    let s = RewardSchedule::power_decay(1.0, alpha);
    let grid = [2000.0f64, 11000.0];
    let mut p = Vec::new();
    for n in grid {
        let e = urn_run(
            vec![1.0, n - 1.0],
            s,
            50_000,
            50,
            reps,
            0.25,
            child_seed(seed, &[n.to_bits(), 2]),
        )?;
        p.push(e.p_max(0, 0).0);
    }
    let slope = (p[1] / p[0]).ln() / (grid[1] / grid[0]).ln();
    out.push(
        Measurement::at_most(
            "log P_max vs log N slope, power_decay_0.1",
            slope,
            -alpha / (1.0 - alpha) + 0.15,
        )
        .with_note(format!("P_max at N=2000: {}, N=11000: {}", p[0], p[1])),
    );
    Ok(out)
}

fn chaotic_centralization(opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    let reps = opts.replicates(10_000);
    for pi0 in [0.5, 0.25, 0.125] {
        let e = urn_run(
            vec![1000.0 * pi0, 1000.0 * (1.0 - pi0)],
            RewardSchedule::proportional(0.001, 1.1),
            5000,
            0,
            reps,
            0.05,
            child_seed(seed, &[f64::to_bits(pi0)]),
        )?;
        let shares = &e.tracked[0].terminal;
        let high = stats::fraction(shares, |x| x > 0.99);
        let low = stats::fraction(shares, |x| x < 0.01);
        let se = stats::proportion_se(pi0, reps);
        out.push(Measurement::within(
            format!("P(share > 0.99), pi0={pi0}"),
            high,
            pi0,
            4.0 * se,
        ));
        out.push(Measurement::at_most(
            format!("mass in [0.01, 0.99], pi0={pi0}"),
            1.0 - high - low,
            0.01,
        ));
    }
    Ok(out)
}

fn feature_growth(opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for n in [2.0, 5.0] {
        let s = feature_ensemble(
            &DiffuseSpec::Uniform,
            &RewardSchedule::constant(1.0),
            n,
            100_000,
            opts.replicates(200),
            child_seed(seed, &[f64::to_bits(n)]),
        )?;
        out.push(Measurement::within(
            format!("mean K_T/log T, N/R={n}"),
            s.k_over_log.mean,
            n,
            0.1 * n,
        ));
        out.push(Measurement::within(
            format!("first-appearance share mean, N/R={n}"),
            s.first_share.mean,
            1.0 / (n + 1.0),
            4.0 * s.first_share.std_error(),
        ));
    }
    Ok(out)
}

fn dilution(opts: &CheckOptions, seed: u64) -> Result<Vec<Measurement>> {
    let (n, theta, horizon) = (10.0, 1.0, 50_000);
    let constant = RewardSchedule::constant(1.0);
    let cfg = DynConfig {
        coins: vec![1.0, 9.0],
        theta,
        schedule: constant,
        horizon,
        stride: 0,
        tracked: vec![0],
        base: DiffuseSpec::Uniform,
    };
    let s = dyn_ensemble(&cfg, opts.replicates(10_000), seed)?;
    let beta = LimitLaw::Beta { a: 1.0, b: 10.0 };
    let ks = ks_distance(&s.tracked[0].terminal, |x| beta.cdf(x).unwrap());
    let ratios = MeanVar::from_slice(&s.tracked[0].terminal_ratios());

    let product = expected_limit_ratio(&constant, n, theta, horizon)?;
    let n_t = n + horizon as f64;
    let closed = n / (n + theta) * (n_t + theta) / n_t;

    let fast = RewardSchedule::power_decay(1.0, 2.0);
    let early = expected_limit_ratio(&fast, n, theta, 1_000)?;
    let late = expected_limit_ratio(&fast, n, theta, 1_000_000)?;
    let decay = (early.value - late.value) / (early.value * early.tail_bound);
    let class = |c: LimitClass| format!("{c:?}").to_lowercase();

    Ok(vec![
        Measurement::at_most("KS distance of terminal share to Beta(1, 10)", ks, 0.05),
        Measurement::within("mean incumbent ratio", ratios.mean, n / (n + theta), 4.0 * ratios.std_error()),
        Measurement::at_most("truncated product vs telescoped closed form (rel err)", (product.value - closed).abs() / closed, 1e-12),
        Measurement::above("power_decay_2: product decay from T=1e3 to T=1e6 over tail-bound-predicted decay", decay, 10.0)
            .with_note(format!(
                "product {} at T=1e3, {} at T=1e6; tail bound at T=1e3 {}",
                early.value, late.value, early.tail_bound
            )),
        Measurement {
            item: "power_decay_2: classification is zero (measured: certified lower bound on the limit ratio)".into(),
            measured: late.lower,
            tolerance: "classification == zero".into(),
            passed: late.classification == LimitClass::Zero,
            note: Some(format!(
                "certified {}, by reward regime {}",
                class(late.classification),
                class(late.regime_classification)
            )),
        },
    ])
}

fn exchangeable(_: &CheckOptions, _: u64) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for (initial, reward) in [([1.0, 1.0], 1.0), ([1.0, 2.0], 1.0), ([0.3, 2.7], 2.5)] {
        out.push(Measurement::at_most(
            format!("pattern probability spread under permutation, coins {initial:?}, R={reward}, length<=6"),
            oracle::permutation_defect(initial, reward, 6),
            1e-14,
        ));
    }
    out.push(Measurement::at_most(
        "library exchangeability defect, coins [1.0, 2.0], R=1",
        exchangeability_defect(&[1.0, 2.0], &RewardSchedule::constant(1.0), 6)?,
        1e-14,
    ));
    Ok(out)
}
