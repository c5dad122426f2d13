//! Estimators evaluated at each point of an experiment's `N` grid.
//!
//! Each estimator contributes named columns to the estimates table and may add rows
//! to a detail table of its own. Simulations are run lazily and shared between the
//! estimators of a grid point.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use anyhow::{anyhow, bail, Result};
use stakelab::dynamical::{dyn_ensemble, DynConfig, DynSummary};
use stakelab::infinite_pop::{feature_ensemble, DiffuseSpec, FeatureSummary};
use stakelab::limit_laws::{
    classify_and_limit, ks_critical_99, ks_distance, LimitLaw, LimitStatement,
};
use stakelab::moments::{self, Regime};
use stakelab::stats::{self, Histogram, MeanVar};
use stakelab::urn::{ensemble, EnsembleConfig, EnsembleSummary, UrnConfig};
use stakelab::{Error as CoreError, RewardPath, RewardSchedule};

use crate::config::{ExperimentConfig, HistogramOf, Model};
use crate::output::{Cell, Table};

/// One grid point of an experiment and its cached simulations.
pub struct Point<'a> {
    pub config: &'a ExperimentConfig,
    pub n: f64,
    pub n0: f64,
    pub seed: u64,
    urn: OnceLock<EnsembleSummary>,
    dilution: OnceLock<DynSummary>,
    feature: OnceLock<FeatureSummary>,
}

fn cached<T>(cell: &OnceLock<T>, make: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = make()?;
    Ok(cell.get_or_init(|| v))
}

impl<'a> Point<'a> {
    pub fn new(config: &'a ExperimentConfig, n: f64, seed: u64) -> Self {
        Self {
            config,
            n,
            n0: config.initial.stake(n),
            seed,
            urn: OnceLock::new(),
            dilution: OnceLock::new(),
            feature: OnceLock::new(),
        }
    }

    /// Whether an urn ensemble has been run for this point.
    pub fn has_urn(&self) -> bool {
        self.urn.get().is_some()
    }

    pub fn pi0(&self) -> f64 {
        self.n0 / self.n
    }

    pub fn urn(&self) -> Result<&EnsembleSummary> {
        if self.config.model != Model::Urn {
            bail!("this estimator needs the urn model");
        }
        cached(&self.urn, || {
            let c = self.config;
            let cfg = EnsembleConfig {
                urn: UrnConfig::new(c.coins(self.n), c.schedule, c.horizon)
                    .tracked(vec![0])
                    .stride(c.stride),
                replicates: c.replicates,
                seed: self.seed,
                thresholds: vec![c.epsilon],
                keep_terminal: true,
            };
            Ok(ensemble(&cfg)?)
        })
    }

    pub fn dilution(&self) -> Result<&DynSummary> {
        let Model::Dilution { theta } = self.config.model else {
            bail!("this estimator needs the dilution model");
        };
        cached(&self.dilution, || {
            let c = self.config;
            let cfg = DynConfig {
                coins: vec![self.n0, self.n - self.n0],
                theta,
                schedule: c.schedule,
                horizon: c.horizon,
                stride: c.stride,
                tracked: vec![0],
                base: DiffuseSpec::Uniform,
            };
            Ok(dyn_ensemble(&cfg, c.replicates, self.seed)?)
        })
    }

    pub fn feature(&self) -> Result<&FeatureSummary> {
        let Model::Feature { base } = self.config.model else {
            bail!("this estimator needs the feature model");
        };
        cached(&self.feature, || {
            let c = self.config;
            Ok(feature_ensemble(
                &base,
                &c.schedule,
                self.n,
                c.horizon,
                c.replicates,
                self.seed,
            )?)
        })
    }

    /// The limit law of the tracked investor's ratio or share, when one is known.
    fn limit_law(&self) -> Option<LimitLaw> {
        let c = classify_and_limit(
            &self.config.schedule,
            self.n,
            &self.config.initial,
            self.config.epsilon,
        )
        .ok()?;
        match c.statement {
            LimitStatement::Law { law } => Some(law),
            _ => None,
        }
    }

    fn ratios(&self) -> Result<Vec<f64>> {
        Ok(self.urn()?.tracked[0].terminal_ratios())
    }
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn columns(&self, config: &ExperimentConfig) -> Vec<String>;
    fn evaluate(&self, point: &Point) -> Result<Vec<Cell>>;
    /// Rows of a per-point detail table, named after the estimator.
    fn detail(&self, _point: &Point) -> Result<Option<Table>> {
        Ok(None)
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn proportion(hits: usize, total: usize) -> (f64, f64) {
    let p = hits as f64 / total as f64;
    (p, stats::proportion_se(p, total as u64))
}

/// Standard error of the sample variance, `√((m4 − s⁴)/n)`.
fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = stats::mean(xs);
    let s2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - s2 * s2).max(0.0) / n).sqrt()
}

/// `max_t P(|ratio − 1| > ε)` with the uniform-in-time bound where it is explicit.
pub struct PMax;

impl Estimator for PMax {
    fn name(&self) -> &'static str {
        "p_max"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&["p_max", "p_max_se", "p_max_time", "bound", "bound_order"])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let s = p.urn()?;
        let (value, time) = s.p_max(0, 0);
        let c = p.config;
        let bound = match moments::concentration_bound(&c.schedule, p.n, p.n0, c.epsilon) {
            Ok(b) => Some(b),
            Err(CoreError::UnspecifiedConstant(_) | CoreError::UnclassifiedRegime(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let order = match Regime::of(&c.schedule) {
            Ok(Regime::SlowDecay { alpha }) => Some(moments::concentration_scale(alpha, p.n, p.n0)),
            _ => None,
        };
        Ok(vec![
            value.into(),
            stats::proportion_se(value, s.replicates).into(),
            time.into(),
            Cell::opt(bound),
            Cell::opt(order),
        ])
    }
}

/// Mean and variance of the terminal ratio, with the exact variance from `a_T`.
pub struct Variance;

impl Estimator for Variance {
    fn name(&self) -> &'static str {
        "variance"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&[
            "mean_ratio",
            "mean_ratio_se",
            "var_ratio",
            "var_ratio_se",
            "var_ratio_exact",
            "var_ratio_max",
        ])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let s = p.urn()?;
        let ratios = p.ratios()?;
        let m = MeanVar::from_slice(&ratios);
        let pi0 = p.pi0();
        let var_max = s.tracked[0]
            .moments
            .iter()
            .map(|mv| mv.variance() / (pi0 * pi0))
            .fold(0.0, f64::max);
        let path = RewardPath::new(&p.config.schedule, p.n, p.config.horizon)?;
        let exact = moments::a_sequence_on_path(&path)
            .last()
            .map(|a| a * (1.0 - pi0) / pi0);
        Ok(vec![
            m.mean.into(),
            m.std_error().into(),
            m.variance().into(),
            variance_se(&ratios).into(),
            Cell::opt(exact),
            var_max.into(),
        ])
    }
}

/// `P(|ratio − 1| > ε)` at the horizon and its maximum over snapshots.
pub struct Deviation;

impl Estimator for Deviation {
    fn name(&self) -> &'static str {
        "deviation"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&["p_dev", "p_dev_se", "p_dev_max"])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let s = p.urn()?;
        let ratios = p.ratios()?;
        let eps = p.config.epsilon;
        let (v, se) = proportion(
            ratios.iter().filter(|r| (*r - 1.0).abs() > eps).count(),
            ratios.len(),
        );
        Ok(vec![v.into(), se.into(), s.p_max(0, 0).0.into()])
    }
}

/// `P(ratio < x)` and `P(ratio > x)` at the horizon for each tail level.
pub struct Tail;

impl Estimator for Tail {
    fn name(&self) -> &'static str {
        "tail"
    }

    fn columns(&self, c: &ExperimentConfig) -> Vec<String> {
        c.tail_levels()
            .iter()
            .flat_map(|x| {
                [
                    format!("p_below_{x}"),
                    format!("p_below_{x}_se"),
                    format!("p_above_{x}"),
                    format!("p_above_{x}_se"),
                ]
            })
            .collect()
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let ratios = p.ratios()?;
        let mut out = Vec::new();
        for x in p.config.tail_levels() {
            let (lo, lo_se) = proportion(ratios.iter().filter(|&&r| r < x).count(), ratios.len());
            let (hi, hi_se) = proportion(ratios.iter().filter(|&&r| r > x).count(), ratios.len());
            out.extend([lo.into(), lo_se.into(), hi.into(), hi_se.into()]);
        }
        Ok(out)
    }
}

/// Histogram of the terminal ratio or share, with the limit law's bin masses.
pub struct HistogramEstimator;

impl HistogramEstimator {
    fn values(&self, p: &Point) -> Result<Vec<f64>> {
        let ratios = p.ratios()?;
        Ok(match p.config.histogram.of {
            HistogramOf::Ratio => ratios,
            HistogramOf::Share => ratios.iter().map(|r| r * p.pi0()).collect(),
        })
    }

    fn reference(&self, p: &Point) -> Option<Box<dyn Fn(f64) -> f64>> {
        let law = p.limit_law()?;
        let fits = matches!(
            (p.config.histogram.of, &law),
            (HistogramOf::Ratio, LimitLaw::GammaRatio { .. })
                | (HistogramOf::Share, LimitLaw::TwoPoint { .. })
        );
        fits.then(|| Box::new(move |x| law.cdf(x).unwrap_or(f64::NAN)) as Box<dyn Fn(f64) -> f64>)
    }
}

impl Estimator for HistogramEstimator {
    fn name(&self) -> &'static str {
        "histogram"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&["hist_in_range", "hist_first_bin", "hist_last_bin"])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let h = &p.config.histogram;
        let hist = Histogram::new(h.lo, h.hi, h.bins, &self.values(p)?);
        let masses = hist.masses();
        Ok(vec![
            masses.iter().sum::<f64>().into(),
            masses[0].into(),
            masses[masses.len() - 1].into(),
        ])
    }

    fn detail(&self, p: &Point) -> Result<Option<Table>> {
        let h = &p.config.histogram;
        let hist = Histogram::new(h.lo, h.hi, h.bins, &self.values(p)?);
        let reference = self.reference(p);
        let mut t = Table::new(
            "histogram",
            names(&["N", "bin_lo", "bin_hi", "mass", "limit_mass"]),
        );
        for (bin, mass) in hist.masses().into_iter().enumerate() {
            let (lo, hi) = hist.edges(bin);
            let limit = reference.as_ref().map(|cdf| {
                // The first bin includes its lower edge, so atoms there count.
                let below = if bin == 0 {
                    lo - f64::EPSILON * lo.abs().max(1.0)
                } else {
                    lo
                };
                cdf(hi) - cdf(below)
            });
            t.push(vec![
                p.n.into(),
                lo.into(),
                hi.into(),
                mass.into(),
                Cell::opt(limit),
            ]);
        }
        Ok(Some(t))
    }
}

/// Kolmogorov-Smirnov distances of the terminal ratio to the limit laws.
pub struct Ks;

impl Estimator for Ks {
    fn name(&self) -> &'static str {
        "ks"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&["ks_limit", "ks_exact", "ks_critical_99"])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let ratios = p.ratios()?;
        let limit = match p.limit_law() {
            Some(law @ LimitLaw::GammaRatio { .. }) => {
                Some(ks_distance(&ratios, |x| law.cdf(x).unwrap()))
            }
            _ => None,
        };
        // Constant rewards: the share limit is exactly Beta(n0/R, (N − n0)/R).
        let exact = match p.config.schedule {
            RewardSchedule::Constant { reward } => {
                let law = LimitLaw::Beta {
                    a: p.n0 / reward,
                    b: (p.n - p.n0) / reward,
                };
                let pi0 = p.pi0();
                Some(ks_distance(&ratios, |x| law.cdf(x * pi0).unwrap()))
            }
            _ => None,
        };
        Ok(vec![
            Cell::opt(limit),
            Cell::opt(exact),
            ks_critical_99(ratios.len()).into(),
        ])
    }
}

/// Fractions of runs absorbed near 1 and near 0 (thresholds 0.99 and 0.01 on the share).
pub struct Absorption;

impl Estimator for Absorption {
    fn name(&self) -> &'static str {
        "absorption"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&["p_high", "p_high_se", "p_low", "p_mid", "pi0", "truncated"])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let s = p.urn()?;
        let shares = &s.tracked[0].terminal;
        let n = shares.len();
        let (high, high_se) = proportion(shares.iter().filter(|&&x| x > 0.99).count(), n);
        let (low, _) = proportion(shares.iter().filter(|&&x| x < 0.01).count(), n);
        Ok(vec![
            high.into(),
            high_se.into(),
            low.into(),
            (1.0 - high - low).into(),
            p.pi0().into(),
            s.truncated.into(),
        ])
    }
}

/// Growth of the number of distinct features and the first feature's share.
pub struct KGrowth;

impl Estimator for KGrowth {
    fn name(&self) -> &'static str {
        "k_t_growth"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&[
            "k_over_log",
            "k_over_log_se",
            "k_over_log_exact",
            "n_over_r",
            "first_share",
            "first_share_se",
            "first_share_expected",
        ])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let s = p.feature()?;
        let path = RewardPath::new(&p.config.schedule, p.n, s.horizon)?;
        // A fresh feature enters at step t with probability N/N_{t−1}.
        let expected_k: f64 = (0..path.len()).map(|t| p.n / path.supply(t)).sum();
        let n_over_r = match p.config.schedule {
            RewardSchedule::Constant { reward } => Some(p.n / reward),
            _ => None,
        };
        Ok(vec![
            s.k_over_log.mean.into(),
            s.k_over_log.std_error().into(),
            (expected_k / (path.len() as f64).ln()).into(),
            Cell::opt(n_over_r),
            s.first_share.mean.into(),
            s.first_share.std_error().into(),
            (path.reward(1) / path.supply(1)).into(),
        ])
    }
}

/// Incumbent and newcomer shares under dilution.
pub struct Dilution;

impl Estimator for Dilution {
    fn name(&self) -> &'static str {
        "dilution"
    }

    fn columns(&self, _: &ExperimentConfig) -> Vec<String> {
        names(&[
            "incumbent_mean_ratio",
            "incumbent_mean_ratio_se",
            "predicted_ratio",
            "newcomer_share",
            "newcomer_share_se",
            "ks_beta",
        ])
    }

    fn evaluate(&self, p: &Point) -> Result<Vec<Cell>> {
        let s = p.dilution()?;
        let Model::Dilution { theta } = p.config.model else {
            unreachable!()
        };
        let ratios = s.tracked[0].terminal_ratios();
        let m = MeanVar::from_slice(&ratios);
        let newcomers = MeanVar::from_slice(&s.newcomer_terminal);
        let ks = match p.config.schedule {
            RewardSchedule::Constant { reward } => {
                let law = LimitLaw::Beta {
                    a: p.n0 / reward,
                    b: (p.n + theta - p.n0) / reward,
                };
                Some(ks_distance(&s.tracked[0].terminal, |x| law.cdf(x).unwrap()))
            }
            _ => None,
        };
        Ok(vec![
            m.mean.into(),
            m.std_error().into(),
            (*s.predicted_ratio.last().expect("at least one snapshot")).into(),
            newcomers.mean.into(),
            newcomers.std_error().into(),
            Cell::opt(ks),
        ])
    }
}

/// Estimators by name.
pub struct EstimatorRegistry {
    entries: BTreeMap<&'static str, Box<dyn Estimator>>,
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(PMax));
        r.register(Box::new(Variance));
        r.register(Box::new(Deviation));
        r.register(Box::new(Tail));
        r.register(Box::new(HistogramEstimator));
        r.register(Box::new(Ks));
        r.register(Box::new(Absorption));
        r.register(Box::new(KGrowth));
        r.register(Box::new(Dilution));
        r
    }

    pub fn register(&mut self, e: Box<dyn Estimator>) {
        self.entries.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.entries.get(name).map(|e| e.as_ref()).ok_or_else(|| {
            anyhow!(
                "unknown estimator `{name}` (known: {})",
                self.names().join(", ")
            )
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
