//! Infinite-population urns: the Blackwell-MacQueen predictive rule, the feature
//! model on `[0, 1]`, order-of-appearance bookkeeping, species-sampling rules and the
//! discrete urn over the natural numbers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::schedule::{RewardPath, RewardSchedule};
use crate::stats::MeanVar;
use crate::urn::{snapshot_times, Trajectory};

/// A selected feature: an investor index or a point of a diffuse feature space.
///
/// Points compare by their bit pattern, so two features are equal only when they
/// are the same draw.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Index(u64),
    Point(f64),
}

impl PartialEq for Feature {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Feature::Index(a), Feature::Index(b)) => a == b,
            (Feature::Point(a), Feature::Point(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Feature {}

impl Hash for Feature {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Feature::Index(k) => (0u8, *k).hash(state),
            Feature::Point(x) => (1u8, x.to_bits()).hash(state),
        }
    }
}

/// Initial endowments `n_{k,0}`, `k = 1, 2, …`, of a countable population.
pub trait WeightRule: Debug + Send + Sync {
    /// `N = Σ_k n_{k,0}`.
    fn total(&self) -> f64;
    /// `n_{k,0}` for `k ≥ 1`.
    fn weight(&self, k: u64) -> f64;
    /// `Σ_{j≤k} n_{j,0}`.
    fn cumulative(&self, k: u64) -> f64;
    /// Smallest `k ≥ 1` with `cumulative(k) > target`, for `0 ≤ target < total()`.
    fn invert(&self, target: f64) -> u64;
}

/// `n_{k,0} = N (1 − q) q^{k−1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometric {
    pub total: f64,
    pub q: f64,
}

impl WeightRule for Geometric {
    fn total(&self) -> f64 {
        self.total
    }

    fn weight(&self, k: u64) -> f64 {
        self.total * (1.0 - self.q) * self.q.powf((k - 1) as f64)
    }

    fn cumulative(&self, k: u64) -> f64 {
        self.total * (1.0 - self.q.powf(k as f64))
    }

    fn invert(&self, target: f64) -> u64 {
        // 1 − q^k > x/N  ⇔  k > ln(1 − x/N)/ln q
        let guess = ((-target / self.total).ln_1p() / self.q.ln()).floor();
        refine(self, guess.clamp(0.0, 1e18) as u64 + 1, target)
    }
}

/// `n_{k,0} = N (k^{1−s} − (k+1)^{1−s})`, so that `Σ_{j≤k} n_{j,0} = N(1 − (k+1)^{1−s})`
/// and `n_{k,0} ~ N (s−1) k^{−s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaLike {
    pub total: f64,
    pub s: f64,
}

impl WeightRule for ZetaLike {
    fn total(&self) -> f64 {
        self.total
    }

    fn weight(&self, k: u64) -> f64 {
        let e = 1.0 - self.s;
        self.total * ((k as f64).powf(e) - ((k + 1) as f64).powf(e))
    }

    fn cumulative(&self, k: u64) -> f64 {
        self.total * (1.0 - ((k + 1) as f64).powf(1.0 - self.s))
    }

    fn invert(&self, target: f64) -> u64 {
        // (k+1)^{1−s} < 1 − x/N  ⇔  k + 1 > (1 − x/N)^{1/(1−s)}
        let bound = (1.0 - target / self.total).powf(1.0 / (1.0 - self.s));
        refine(self, bound.floor().clamp(1.0, 1e18) as u64, target)
    }
}

/// Finitely many investors `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Finite {
    prefix: Vec<f64>,
}

impl Finite {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("finite weights must be positive"));
        }
        let mut acc = 0.0;
        let prefix = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { prefix })
    }
}

impl WeightRule for Finite {
    fn total(&self) -> f64 {
        *self.prefix.last().expect("nonempty")
    }

    fn weight(&self, k: u64) -> f64 {
        let i = (k - 1) as usize;
        match i {
            0 => self.prefix[0],
            i if i < self.prefix.len() => self.prefix[i] - self.prefix[i - 1],
            _ => 0.0,
        }
    }

    fn cumulative(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.prefix[((k - 1) as usize).min(self.prefix.len() - 1)]
        }
    }

    fn invert(&self, target: f64) -> u64 {
        let i = self.prefix.partition_point(|&c| c <= target);
        (i.min(self.prefix.len() - 1) + 1) as u64
    }
}

/// Corrects an analytic inversion guess for rounding in either direction.
fn refine(rule: &dyn WeightRule, mut k: u64, target: f64) -> u64 {
    k = k.max(1);
    while k > 1 && rule.cumulative(k - 1) > target {
        k -= 1;
    }
    let mut steps = 0;
    while rule.cumulative(k) <= target && steps < 64 {
        k += 1;
        steps += 1;
    }
    k
}

/// Serializable choice of [`WeightRule`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightSpec {
    Geometric { total: f64, q: f64 },
    ZetaLike { total: f64, s: f64 },
    Finite { weights: Vec<f64> },
}

impl WeightSpec {
    pub fn build(&self) -> Result<Box<dyn WeightRule>> {
        Ok(match self {
            WeightSpec::Geometric { total, q } => {
                if !(*total > 0.0 && *q > 0.0 && *q < 1.0) {
                    return Err(Error::invalid(
                        "geometric weights need total > 0 and q in (0,1)",
                    ));
                }
                Box::new(Geometric {
                    total: *total,
                    q: *q,
                })
            }
            WeightSpec::ZetaLike { total, s } => {
                if !(*total > 0.0 && *s > 1.0) {
                    return Err(Error::invalid("zeta-like weights need total > 0 and s > 1"));
                }
                Box::new(ZetaLike {
                    total: *total,
                    s: *s,
                })
            }
            WeightSpec::Finite { weights } => Box::new(Finite::new(weights)?),
        })
    }
}

/// Quantile function of an atomless law on `[0, 1]`.
pub trait InverseCdf: Debug + Send + Sync {
    fn quantile(&self, u: f64) -> f64;
}

/// Serializable diffuse base law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DiffuseSpec {
    Uniform,
    /// Density `k x^{k−1}` on `[0, 1]`.
    Power {
        exponent: f64,
    },
}

impl InverseCdf for DiffuseSpec {
    fn quantile(&self, u: f64) -> f64 {
        match *self {
            DiffuseSpec::Uniform => u,
            DiffuseSpec::Power { exponent } => u.powf(1.0 / exponent),
        }
    }
}

/// The base measure `N ν` from which fresh features are drawn.
#[derive(Debug)]
pub enum BaseMeasure {
    /// Discrete over the naturals with masses `n_{k,0}`.
    Discrete(Box<dyn WeightRule>),
    /// Diffuse on `[0, 1]`.
    Diffuse(Box<dyn InverseCdf>),
}

impl BaseMeasure {
    pub fn uniform() -> Self {
        BaseMeasure::Diffuse(Box::new(DiffuseSpec::Uniform))
    }

    pub fn draw(&self, u: f64) -> Feature {
        match self {
            BaseMeasure::Discrete(w) => Feature::Index(w.invert(u * w.total())),
            BaseMeasure::Diffuse(q) => Feature::Point(q.quantile(u)),
        }
    }

    pub fn is_diffuse(&self) -> bool {
        matches!(self, BaseMeasure::Diffuse(_))
    }

    /// `ν({f})`: positive only for discrete bases.
    pub fn atom_probability(&self, f: Feature) -> f64 {
        match (self, f) {
            (BaseMeasure::Discrete(w), Feature::Index(k)) if k >= 1 => w.weight(k) / w.total(),
            _ => 0.0,
        }
    }
}

/// Reward atoms in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtomLedger {
    /// `X̃_j`.
    pub features: Vec<Feature>,
    /// `M_j`.
    pub first_seen: Vec<u64>,
    /// Reward accumulated by each atom.
    pub rewards: Vec<f64>,
    /// `N_{jt}`.
    pub counts: Vec<u64>,
    pub t: u64,
    /// `Σ_{n≤t} R_n`.
    pub total_reward: f64,
    pub fresh_draws: u64,
    /// Fresh draws from a diffuse base that hit an existing atom.
    pub collisions: u64,
    /// `(t, K_t)` at powers of two.
    pub k_snapshots: Vec<(u64, u64)>,
    #[serde(skip)]
    lookup: HashMap<Feature, usize>,
}

impl AtomLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// `K_t`.
    pub fn distinct(&self) -> u64 {
        self.features.len() as u64
    }

    pub fn position(&self, f: Feature) -> Option<usize> {
        self.lookup.get(&f).copied()
    }

    /// Accumulated reward of feature `f`.
    pub fn reward_of(&self, f: Feature) -> f64 {
        self.position(f).map_or(0.0, |j| self.rewards[j])
    }

    /// Credits `reward` to `f` at the next step and maintains appearance order.
    pub fn record(&mut self, f: Feature, reward: f64, fresh: bool) {
        self.t += 1;
        self.total_reward += reward;
        if fresh {
            self.fresh_draws += 1;
        }
        match self.lookup.get(&f) {
            Some(&j) => {
                self.rewards[j] += reward;
                self.counts[j] += 1;
                if fresh && matches!(f, Feature::Point(_)) {
                    self.collisions += 1;
                }
            }
            None => {
                self.lookup.insert(f, self.features.len());
                self.features.push(f);
                self.first_seen.push(self.t);
                self.rewards.push(reward);
                self.counts.push(1);
            }
        }
        if self.t.is_power_of_two() {
            self.k_snapshots.push((self.t, self.distinct()));
        }
    }

    /// Index of the atom whose running reward sum first exceeds `target`.
    fn select(&self, target: f64) -> usize {
        crate::urn::select_by_mass(&self.rewards, target)
    }
}

/// Probability that the next draw is `f`, `(N ν({f}) + reward of f)/(N + Σ R_n)`.
pub fn predictive_probability(ledger: &AtomLedger, base: &BaseMeasure, n: f64, f: Feature) -> f64 {
    (n * base.atom_probability(f) + ledger.reward_of(f)) / (n + ledger.total_reward)
}

/// One Blackwell-MacQueen draw paying `reward`.
///
/// With `S = Σ_{n<t} R_n`, the draw is fresh from the base when
/// `u_select (N + S) < N` (using `u_fresh`), and otherwise picks an existing atom in
/// proportion to its accumulated reward. Returns the feature and whether it was fresh.
pub fn predictive_step(
    ledger: &mut AtomLedger,
    base: &BaseMeasure,
    n: f64,
    reward: f64,
    u_select: f64,
    u_fresh: f64,
) -> (Feature, bool) {
    let target = u_select * (n + ledger.total_reward);
    let (f, fresh) = if target < n || ledger.features.is_empty() {
        (base.draw(u_fresh), true)
    } else {
        (ledger.features[ledger.select(target - n)], false)
    };
    ledger.record(f, reward, fresh);
    (f, fresh)
}

/// Output of one feature-model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRun {
    pub ledger: AtomLedger,
    /// Selected features in order, when requested.
    pub sequence: Option<Vec<Feature>>,
    /// Fresh flags aligned with `sequence`.
    pub fresh: Option<Vec<bool>>,
    /// Supply `N_T`.
    pub supply: f64,
    pub truncated_at: Option<u64>,
}

impl FeatureRun {
    /// Share of the `j`-th feature to appear, relative to the whole supply.
    pub fn appearance_share(&self, j: usize) -> f64 {
        self.ledger.rewards.get(j).map_or(0.0, |r| r / self.supply)
    }

    /// `(t, K_t)` at powers of two and at the final step.
    pub fn k_series(&self) -> Vec<(u64, u64)> {
        let mut series = self.ledger.k_snapshots.clone();
        if series.last().map(|s| s.0) != Some(self.ledger.t) {
            series.push((self.ledger.t, self.ledger.distinct()));
        }
        series
    }
}

/// Runs the feature model for `horizon` steps from `seed`. Every step draws two
/// uniforms, selection first.
pub fn simulate_feature_model(
    base: &BaseMeasure,
    schedule: &RewardSchedule,
    n: f64,
    horizon: u64,
    seed: u64,
    record: bool,
) -> Result<FeatureRun> {
    let path = RewardPath::new(schedule, n, horizon)?;
    Ok(feature_run_on_path(base, &path, n, seed, record))
}

fn feature_run_on_path(
    base: &BaseMeasure,
    path: &RewardPath,
    n: f64,
    seed: u64,
    record: bool,
) -> FeatureRun {
    let mut rng = rng::stream(seed);
    let mut ledger = AtomLedger::new();
    let mut sequence = record.then(Vec::new);
    let mut fresh_flags = record.then(Vec::new);
    for t in 1..=path.len() {
        let u_select: f64 = rng.random();
        let u_fresh: f64 = rng.random();
        let (f, fresh) = predictive_step(&mut ledger, base, n, path.reward(t), u_select, u_fresh);
        if let (Some(seq), Some(flags)) = (sequence.as_mut(), fresh_flags.as_mut()) {
            seq.push(f);
            flags.push(fresh);
        }
    }
    FeatureRun {
        supply: n + ledger.total_reward,
        ledger,
        sequence,
        fresh: fresh_flags,
        truncated_at: path.overflow_step(),
    }
}

/// Monte Carlo summary of the feature model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub replicates: u64,
    pub horizon: u64,
    /// `K_T / ln T` across replicates.
    pub k_over_log: MeanVar,
    /// Share of the first feature to appear at time `T`.
    pub first_share: MeanVar,
    pub first_shares: Vec<f64>,
    /// Replicates in which the fresh-draw count differed from `K_T`.
    pub fresh_mismatches: u64,
    pub collisions: u64,
}

/// Independent feature-model runs with seeds `rng::replicate_seed(seed, i)`.
pub fn feature_ensemble(
    base: &DiffuseSpec,
    schedule: &RewardSchedule,
    n: f64,
    horizon: u64,
    replicates: u64,
    seed: u64,
) -> Result<FeatureSummary> {
    if replicates == 0 || horizon < 2 {
        return Err(Error::invalid(
            "feature ensembles need replicates >= 1 and horizon >= 2",
        ));
    }
    let path = RewardPath::new(schedule, n, horizon)?;
    let base = BaseMeasure::Diffuse(Box::new(*base));
    let blocks = rng::map_blocks(replicates, |range| {
        range
            .map(|i| {
                let run = feature_run_on_path(&base, &path, n, rng::replicate_seed(seed, i), false);
                let l = &run.ledger;
                (
                    l.distinct(),
                    run.appearance_share(0),
                    l.fresh_draws,
                    l.collisions,
                )
            })
            .collect::<Vec<_>>()
    });
    let rows: Vec<_> = blocks.into_iter().flatten().collect();
    let log_t = (path.len() as f64).ln();
    let ks: Vec<f64> = rows.iter().map(|r| r.0 as f64 / log_t).collect();
    let first_shares: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(FeatureSummary {
        replicates,
        horizon: path.len(),
        k_over_log: MeanVar::from_slice(&ks),
        first_share: MeanVar::from_slice(&first_shares),
        first_shares,
        fresh_mismatches: rows.iter().filter(|r| r.2 != r.0).count() as u64,
        collisions: rows.iter().map(|r| r.3).sum(),
    })
}

/// Order-of-appearance decomposition of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    /// `M_j` (1-based positions).
    pub first_seen: Vec<u64>,
    /// `X̃_j`.
    pub features: Vec<Feature>,
    /// `K_t` for `t = 1..=len`.
    pub k_series: Vec<u64>,
    /// `N_{j,len}`.
    pub counts: Vec<u64>,
    /// Appearance label of each element of the input.
    pub labels: Vec<usize>,
}

impl Appearance {
    /// Rebuilds the input from the labels and the distinct features.
    pub fn replay(&self) -> Vec<Feature> {
        self.labels.iter().map(|&j| self.features[j]).collect()
    }
}

pub fn relabel_by_appearance(sequence: &[Feature]) -> Appearance {
    let mut seen: HashMap<Feature, usize> = HashMap::new();
    let mut out = Appearance {
        first_seen: Vec::new(),
        features: Vec::new(),
        k_series: Vec::with_capacity(sequence.len()),
        counts: Vec::new(),
        labels: Vec::with_capacity(sequence.len()),
    };
    for (i, &f) in sequence.iter().enumerate() {
        let j = *seen.entry(f).or_insert_with(|| {
            out.first_seen.push(i as u64 + 1);
            out.features.push(f);
            out.counts.push(0);
            out.features.len() - 1
        });
        out.counts[j] += 1;
        out.labels.push(j);
        out.k_series.push(out.features.len() as u64);
    }
    out
}

/// A species-sampling rule: given the histogram `(n_1, …, n_k)` of the features seen
/// so far, probabilities `p_1, …, p_{k+1}`, the last one for a fresh feature.
pub trait SpeciesRule {
    fn probabilities(&self, counts: &[u64]) -> Vec<f64>;
}

impl<F: Fn(&[u64]) -> Vec<f64>> SpeciesRule for F {
    fn probabilities(&self, counts: &[u64]) -> Vec<f64> {
        self(counts)
    }
}

/// `p_j = n_j/(θ + n)`, fresh `θ/(θ + n)`, with `θ = N/R` and `n = Σ n_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletRule {
    pub theta: f64,
}

impl SpeciesRule for DirichletRule {
    fn probabilities(&self, counts: &[u64]) -> Vec<f64> {
        let n: u64 = counts.iter().sum();
        let denom = self.theta + n as f64;
        let mut p: Vec<f64> = counts.iter().map(|&c| c as f64 / denom).collect();
        p.push(self.theta / denom);
        p
    }
}

/// `p_j = (n_j − d)/(θ + n)`, fresh `(θ + k d)/(θ + n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitmanYorRule {
    pub discount: f64,
    pub theta: f64,
}

impl SpeciesRule for PitmanYorRule {
    fn probabilities(&self, counts: &[u64]) -> Vec<f64> {
        let n: u64 = counts.iter().sum();
        let denom = self.theta + n as f64;
        let mut p: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 - self.discount) / denom)
            .collect();
        p.push((self.theta + counts.len() as f64 * self.discount) / denom);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RuleCheck {
    Valid,
    Invalid { witness: Vec<u64>, reason: String },
}

/// Checks `p_j ≥ 0`, `len = k + 1` and `Σ p_j = 1` (to `1e-12`) on every histogram.
pub fn species_rule_check(rule: &dyn SpeciesRule, histograms: &[Vec<u64>]) -> RuleCheck {
    for h in histograms {
        let p = rule.probabilities(h);
        let reason = if p.len() != h.len() + 1 {
            Some(format!(
                "expected {} probabilities, got {}",
                h.len() + 1,
                p.len()
            ))
        } else if let Some(x) = p.iter().find(|x| !(**x >= 0.0)) {
            Some(format!("negative probability {x}"))
        } else {
            let total: f64 = p.iter().sum();
            ((total - 1.0).abs() > 1e-12).then(|| format!("probabilities sum to {total}"))
        };
        if let Some(reason) = reason {
            return RuleCheck::Invalid {
                witness: h.clone(),
                reason,
            };
        }
    }
    RuleCheck::Valid
}

/// All histograms of positive counts with total at most `max_total`.
pub fn histograms_up_to(max_total: u64) -> Vec<Vec<u64>> {
    fn extend(prefix: &mut Vec<u64>, remaining: u64, out: &mut Vec<Vec<u64>>) {
        if !prefix.is_empty() {
            out.push(prefix.clone());
        }
        for c in 1..=remaining {
            prefix.push(c);
            extend(prefix, remaining - c, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), max_total, &mut out);
    out
}

/// Probability of selecting investors `pattern[0], pattern[1], …` in that order from
/// an urn with initial coins `initial`.
pub fn pattern_probability(
    initial: &[f64],
    schedule: &RewardSchedule,
    pattern: &[usize],
) -> Result<f64> {
    let mut coins = initial.to_vec();
    let mut supply: f64 = coins.iter().sum();
    let mut p = 1.0;
    for (t, &k) in pattern.iter().enumerate() {
        let c = coins
            .get_mut(k)
            .ok_or_else(|| Error::invalid(format!("investor {k} does not exist")))?;
        p *= *c / supply;
        let r = schedule.reward_at(t as u64 + 1, supply)?;
        *c += r;
        supply += r;
    }
    Ok(p)
}

/// Largest relative difference between the probability of a selection pattern and
/// that of its sorted rearrangement, over all patterns on `k` investors of length at
/// most `max_len`. Zero (up to rounding) exactly when the selections are exchangeable.
pub fn exchangeability_defect(
    initial: &[f64],
    schedule: &RewardSchedule,
    max_len: u32,
) -> Result<f64> {
    let k = initial.len();
    let mut worst: f64 = 0.0;
    for len in 1..=max_len {
        let count = (k as u64).pow(len);
        for code in 0..count {
            let mut c = code;
            let pattern: Vec<usize> = (0..len)
                .map(|_| {
                    let d = (c % k as u64) as usize;
                    c /= k as u64;
                    d
                })
                .collect();
            let mut sorted = pattern.clone();
            sorted.sort_unstable();
            let p = pattern_probability(initial, schedule, &pattern)?;
            let q = pattern_probability(initial, schedule, &sorted)?;
            worst = worst.max((p - q).abs() / q);
        }
    }
    Ok(worst)
}

/// State of the countable urn: rewards credited to the investors selected so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteState {
    pub t: u64,
    pub supply: f64,
    /// Reward credited to each selected index.
    pub credited: BTreeMap<u64, f64>,
}

impl DiscreteState {
    /// `n_{k,t}/N_t`.
    pub fn share(&self, rule: &dyn WeightRule, k: u64) -> f64 {
        (rule.weight(k) + self.credited.get(&k).copied().unwrap_or(0.0)) / self.supply
    }

    /// Inverse-CDF selection over indices in ascending order, where index `k` has
    /// mass `n_{k,0} + credited_k`.
    pub fn select(&self, rule: &dyn WeightRule, u: f64) -> u64 {
        let target = u * self.supply;
        let mut credited = 0.0;
        for (&m, &r) in &self.credited {
            if m > 1 && rule.cumulative(m - 1) + credited > target {
                return rule.invert(target - credited);
            }
            if rule.cumulative(m) + credited + r > target {
                return m;
            }
            credited += r;
        }
        let rest = target - credited;
        if rest >= rule.total() {
            // Rounding pushed the target past the total mass.
            return self.credited.keys().next_back().copied().unwrap_or(1);
        }
        rule.invert(rest)
    }
}

/// Simulates the urn over the naturals with initial endowments from `rule`.
///
/// Only selected indices are materialized. Selection walks the indices in ascending
/// order with one uniform per step, so for weights supported on `1..=K` the run is
/// draw-for-draw identical to [`crate::urn::simulate`] with the same coins and seed
/// (index `k` here is investor `k − 1` there). Tracked indices are 1-based.
pub fn simulate_discrete_infinite(
    rule: &dyn WeightRule,
    schedule: &RewardSchedule,
    horizon: u64,
    tracked: &[u64],
    stride: u64,
    seed: u64,
) -> Result<Trajectory<DiscreteState>> {
    if tracked.contains(&0) {
        return Err(Error::invalid("indices of the countable urn start at 1"));
    }
    let n = rule.total();
    let path = RewardPath::new(schedule, n, horizon)?;
    let times = snapshot_times(horizon, stride);
    let mut state = DiscreteState {
        t: 0,
        supply: n,
        credited: BTreeMap::new(),
    };
    let mut rng = rng::stream(seed);
    let mut shares = vec![Vec::with_capacity(times.len()); tracked.len()];
    let mut selections = Vec::new();
    for &time in &times {
        while state.t < time.min(path.len()) {
            let reward = path.reward(state.t + 1);
            let u: f64 = rng.random();
            let k = state.select(rule, u);
            *state.credited.entry(k).or_insert(0.0) += reward;
            state.supply += reward;
            state.t += 1;
            selections.push((k - 1).min(u64::from(u32::MAX)) as u32);
        }
        for (series, &k) in shares.iter_mut().zip(tracked) {
            series.push(state.share(rule, k));
        }
    }
    let truncated_at = path
        .overflow_step()
        .filter(|&s| times.last().is_some_and(|&last| last >= s));
    Ok(Trajectory {
        times,
        tracked: tracked.iter().map(|&k| k as usize).collect(),
        shares,
        final_state: state,
        selections: Some(selections),
        truncated_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Feature> {
        xs.iter().map(|&x| Feature::Point(x)).collect()
    }

    #[test]
    fn appearance_worked_example() {
        let seq = pts(&[0.1, 0.1, 0.3, 0.2, 0.2, 0.3, 0.1, 0.4]);
        let a = relabel_by_appearance(&seq);
        assert_eq!(a.first_seen, vec![1, 3, 4, 8]);
        assert_eq!(a.features, pts(&[0.1, 0.3, 0.2, 0.4]));
        assert_eq!(a.counts, vec![3, 2, 2, 1]);
        assert_eq!(a.k_series, vec![1, 1, 2, 3, 3, 3, 3, 4]);
        assert_eq!(a.replay(), seq);
    }

    #[test]
    fn appearance_edge_cases() {
        let empty = relabel_by_appearance(&[]);
        assert!(empty.first_seen.is_empty() && empty.k_series.is_empty());
        let distinct = relabel_by_appearance(&pts(&[0.5, 0.25, 0.125]));
        assert_eq!(distinct.first_seen, vec![1, 2, 3]);
        assert_eq!(distinct.k_series, vec![1, 2, 3]);
    }

    #[test]
    fn first_draw_is_fresh() {
        let mut ledger = AtomLedger::new();
        let (f, fresh) =
            predictive_step(&mut ledger, &BaseMeasure::uniform(), 2.0, 1.0, 0.999, 0.3);
        assert!(fresh);
        assert_eq!(f, Feature::Point(0.3));
        assert_eq!(ledger.first_seen, vec![1]);
    }

    #[test]
    fn fresh_probability_under_constant_reward() {
        let mut ledger = AtomLedger::new();
        let base = BaseMeasure::uniform();
        for (i, u) in [0.1, 0.9, 0.95, 0.2].iter().enumerate() {
            predictive_step(&mut ledger, &base, 3.0, 1.5, *u, 0.1 * (i + 1) as f64);
        }
        // θ = N/R = 2, t = 4: fresh probability θ/(θ + t)
        let unseen = Feature::Point(0.77);
        let fresh = 3.0 / (3.0 + ledger.total_reward);
        assert!((fresh - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(predictive_probability(&ledger, &base, 3.0, unseen), 0.0);
        let atoms: f64 = ledger
            .features
            .iter()
            .map(|&f| predictive_probability(&ledger, &base, 3.0, f))
            .sum();
        assert!((atoms + fresh - 1.0).abs() < 1e-15);
    }

    #[test]
    fn discrete_base_step_law_is_polya() {
        let weights = [1.0, 2.0, 0.5];
        let rule = Finite::new(&weights).unwrap();
        let base = BaseMeasure::Discrete(Box::new(rule));
        let n = 3.5;
        let r = 0.5;
        let mut ledger = AtomLedger::new();
        let mut rng = rng::stream(3);
        let mut hits = [0u64; 3];
        for _ in 0..30 {
            let (f, _) = predictive_step(&mut ledger, &base, n, r, rng.random(), rng.random());
            if let Feature::Index(k) = f {
                hits[(k - 1) as usize] += 1;
            }
            for k in 1..=3u64 {
                let p = predictive_probability(&ledger, &base, n, Feature::Index(k));
                let polya = (weights[(k - 1) as usize] + r * hits[(k - 1) as usize] as f64)
                    / (n + r * ledger.t as f64);
                assert!((p - polya).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ledger_invariants_hold() {
        let run = simulate_feature_model(
            &BaseMeasure::uniform(),
            &RewardSchedule::power_decay(1.0, 0.6),
            4.0,
            3000,
            8,
            true,
        )
        .unwrap();
        let l = &run.ledger;
        assert_eq!(l.counts.iter().sum::<u64>(), 3000);
        assert_eq!(l.fresh_draws, l.distinct());
        assert_eq!(l.collisions, 0);
        assert_eq!(l.first_seen[0], 1);
        assert!(l.first_seen.windows(2).all(|w| w[0] < w[1]));
        let credited: f64 = l.rewards.iter().sum();
        let supply = RewardSchedule::power_decay(1.0, 0.6)
            .supply_after(4.0, 3000)
            .unwrap();
        assert!((4.0 + credited - supply).abs() < 1e-12 * supply);
        let seq = run.sequence.unwrap();
        let a = relabel_by_appearance(&seq);
        assert_eq!(a.first_seen, l.first_seen);
        assert_eq!(a.counts, l.counts);
        let one = simulate_feature_model(
            &BaseMeasure::uniform(),
            &RewardSchedule::constant(1.0),
            2.0,
            1,
            3,
            false,
        )
        .unwrap();
        assert_eq!(one.ledger.distinct(), 1);
    }

    #[test]
    fn species_rules() {
        let hs = histograms_up_to(7);
        assert_eq!(
            species_rule_check(&DirichletRule { theta: 2.0 }, &hs),
            RuleCheck::Valid
        );
        let py = PitmanYorRule {
            discount: 0.3,
            theta: 2.0,
        };
        assert_eq!(species_rule_check(&py, &hs), RuleCheck::Valid);
        let broken = |_: &[u64]| vec![0.6, 0.6];
        let RuleCheck::Invalid { witness, .. } = species_rule_check(&broken, &[vec![1]]) else {
            panic!("expected a witness");
        };
        assert_eq!(witness, vec![1]);
        // compositions of 1..=3: 1 + 2 + 4
        assert_eq!(histograms_up_to(3).len(), 7);
    }

    #[test]
    fn weight_rules_invert_their_cdf() {
        let rules: Vec<Box<dyn WeightRule>> = vec![
            Box::new(Geometric {
                total: 10.0,
                q: 0.7,
            }),
            Box::new(ZetaLike {
                total: 10.0,
                s: 1.5,
            }),
            Box::new(Finite::new(&[1.0, 2.0, 3.0, 4.0]).unwrap()),
        ];
        for rule in &rules {
            let mut acc = 0.0;
            for k in 1..=4 {
                acc += rule.weight(k);
                assert!((rule.cumulative(k) - acc).abs() < 1e-12);
            }
            for i in 0..1000 {
                let target = rule.total() * i as f64 / 1000.0;
                let k = rule.invert(target);
                assert!(rule.cumulative(k) > target);
                assert!(k == 1 || rule.cumulative(k - 1) <= target);
            }
        }
    }

    #[test]
    fn point_mass_weights_keep_one_investor() {
        let rule = Finite::new(&[5.0]).unwrap();
        let traj =
            simulate_discrete_infinite(&rule, &RewardSchedule::constant(1.0), 200, &[1], 10, 4)
                .unwrap();
        assert!(traj.shares[0].iter().all(|&s| s == 1.0));
    }

    #[test]
    fn exchangeable_only_for_constant_rewards() {
        let d = exchangeability_defect(&[1.0, 2.5], &RewardSchedule::constant(0.7), 6).unwrap();
        assert!(d < 1e-14, "{d}");
        let d =
            exchangeability_defect(&[1.0, 2.5], &RewardSchedule::power_decay(1.0, 0.6), 4).unwrap();
        assert!(d > 1e-3);
    }
}
