//! Limiting laws of shares and share ratios, investor classification, samplers and
//! Kolmogorov-Smirnov statistics.

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaCdf, ContinuousCDF, Gamma as GammaCdf};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::moments::{self, Regime};
use crate::rng::{self, SimRng};
use crate::schedule::RewardSchedule;

/// A limiting distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LimitLaw {
    /// Joint law of all shares, `Dir(n_{1,0}/R, …, n_{K,0}/R)`.
    Dirichlet { concentration: Vec<f64> },
    /// Marginal share law `Beta(a, b)`.
    Beta { a: f64, b: f64 },
    /// Law of the ratio `π_{k,∞}/π_{k,0}`: Gamma with shape `n_0/R` and scale `R/n_0`.
    GammaRatio { shape: f64, scale: f64 },
    /// Absorption at 1 with probability `p`, at 0 otherwise.
    TwoPoint { p: f64 },
    /// Stick-breaking with i.i.d. `Beta(1, θ)` sticks.
    Gem { theta: f64 },
    /// Stick-breaking with `W_k ~ Beta(1 − d, θ + k d)`.
    PitmanYor { discount: f64, strength: f64 },
}

/// Draws from a [`LimitLaw`].
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

impl Samples {
    pub fn scalar(self) -> Option<Vec<f64>> {
        match self {
            Samples::Scalar(v) => Some(v),
            Samples::Vector(_) => None,
        }
    }
}

/// Number of sticks drawn per sample for GEM and Pitman-Yor laws.
pub const DEFAULT_STICKS: usize = 64;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {x}")))
    }
}

impl LimitLaw {
    /// `Gamma(n0/R)` scaled by `R/n0`: the medium-investor ratio limit.
    pub fn gamma_ratio(n0: f64, reward: f64) -> Self {
        LimitLaw::GammaRatio {
            shape: n0 / reward,
            scale: reward / n0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LimitLaw::Dirichlet { concentration } => {
                if concentration.len() < 2 {
                    return Err(Error::invalid(
                        "a Dirichlet law needs at least two coordinates",
                    ));
                }
                concentration
                    .iter()
                    .try_for_each(|&a| check_positive("concentration", a))
            }
            LimitLaw::Beta { a, b } => {
                check_positive("a", *a)?;
                check_positive("b", *b)
            }
            LimitLaw::GammaRatio { shape, scale } => {
                check_positive("shape", *shape)?;
                check_positive("scale", *scale)
            }
            LimitLaw::TwoPoint { p } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("p must lie in [0,1], got {p}")))
                }
            }
            LimitLaw::Gem { theta } => check_positive("theta", *theta),
            LimitLaw::PitmanYor { discount, strength } => {
                if !(0.0..1.0).contains(discount) {
                    return Err(Error::invalid(format!(
                        "discount must lie in [0,1), got {discount}"
                    )));
                }
                if !(*strength > -discount) {
                    return Err(Error::invalid("strength must exceed minus the discount"));
                }
                Ok(())
            }
        }
    }

    /// Mean of the scalar law (first weight for stick-breaking laws).
    pub fn mean(&self) -> Option<f64> {
        match *self {
            LimitLaw::Dirichlet { .. } => None,
            LimitLaw::Beta { a, b } => Some(a / (a + b)),
            LimitLaw::GammaRatio { shape, scale } => Some(shape * scale),
            LimitLaw::TwoPoint { p } => Some(p),
            LimitLaw::Gem { theta } => Some(1.0 / (1.0 + theta)),
            LimitLaw::PitmanYor { discount, strength } => Some((1.0 - discount) / (1.0 + strength)),
        }
    }

    /// CDF of the scalar law at `x` (first stick for stick-breaking laws).
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match *self {
            LimitLaw::Dirichlet { .. } => None,
            LimitLaw::Beta { a, b } => Some(beta_cdf(a, b, x)),
            LimitLaw::GammaRatio { shape, scale } => {
                let g = GammaCdf::new(shape, 1.0 / scale).ok()?;
                Some(g.cdf(x.max(0.0)))
            }
            LimitLaw::TwoPoint { p } => Some(if x < 0.0 {
                0.0
            } else if x < 1.0 {
                1.0 - p
            } else {
                1.0
            }),
            LimitLaw::Gem { theta } => Some(beta_cdf(1.0, theta, x)),
            LimitLaw::PitmanYor { discount, strength } => {
                Some(beta_cdf(1.0 - discount, strength + discount, x))
            }
        }
    }

    pub fn survival(&self, x: f64) -> Option<f64> {
        self.cdf(x).map(|c| 1.0 - c)
    }

    /// `n` i.i.d. draws from `rng`. Stick-breaking laws yield [`DEFAULT_STICKS`] weights
    /// per draw.
    pub fn sample_with(&self, n: usize, rng: &mut SimRng) -> Result<Samples> {
        self.validate()?;
        Ok(match self {
            LimitLaw::Dirichlet { concentration } => {
                let gammas = concentration
                    .iter()
                    .map(|&a| GammaDist::new(a, 1.0).map_err(|e| Error::invalid(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                Samples::Vector(
                    (0..n)
                        .map(|_| {
                            let g: Vec<f64> = gammas.iter().map(|d| d.sample(rng)).collect();
                            let total: f64 = g.iter().sum();
                            g.into_iter().map(|x| x / total).collect()
                        })
                        .collect(),
                )
            }
            LimitLaw::Beta { a, b } => {
                let d = BetaDist::new(*a, *b).map_err(|e| Error::invalid(e.to_string()))?;
                Samples::Scalar((0..n).map(|_| d.sample(rng)).collect())
            }
            LimitLaw::GammaRatio { shape, scale } => {
                let d =
                    GammaDist::new(*shape, *scale).map_err(|e| Error::invalid(e.to_string()))?;
                Samples::Scalar((0..n).map(|_| d.sample(rng)).collect())
            }
            LimitLaw::TwoPoint { p } => Samples::Scalar(
                (0..n)
                    .map(|_| if rng.random::<f64>() < *p { 1.0 } else { 0.0 })
                    .collect(),
            ),
            LimitLaw::Gem { theta } => Samples::Vector(
                (0..n)
                    .map(|_| {
                        stick_breaking(|_| (1.0, *theta), DEFAULT_STICKS, rng).map(|s| s.weights)
                    })
                    .collect::<Result<_>>()?,
            ),
            LimitLaw::PitmanYor { discount, strength } => Samples::Vector(
                (0..n)
                    .map(|_| {
                        stick_breaking(
                            |k| (1.0 - discount, strength + k as f64 * discount),
                            DEFAULT_STICKS,
                            rng,
                        )
                        .map(|s| s.weights)
                    })
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        BetaCdf::new(a, b).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
    }
}

/// `n` i.i.d. draws from `law` using the stream seeded by `seed`.
pub fn sample_limit(law: &LimitLaw, n: usize, seed: u64) -> Result<Samples> {
    law.sample_with(n, &mut rng::stream(seed))
}

/// Dirichlet density `Γ(Σa)/ΠΓ(a_i) Π x_i^{a_i − 1}` on the open simplex.
pub fn dirichlet_density(x: &[f64], a: &[f64]) -> Result<f64> {
    if x.len() != a.len() || x.len() < 2 {
        return Err(Error::Domain(
            "point and concentration must share a dimension >= 2".into(),
        ));
    }
    if x.iter().any(|&xi| !(xi > 0.0 && xi < 1.0)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("{x:?} is not in the open simplex")));
    }
    a.iter()
        .try_for_each(|&ai| check_positive("concentration", ai))?;
    let total: f64 = a.iter().sum();
    let log = ln_gamma(total)
        + x.iter()
            .zip(a)
            .map(|(&xi, &ai)| (ai - 1.0) * xi.ln() - ln_gamma(ai))
            .sum::<f64>();
    Ok(log.exp())
}

/// Stick-breaking weights `π_j = W_j Π_{i<j}(1 − W_i)` and the leftover mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickBreaking {
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    /// `Π_{i≤j_max}(1 − W_i)`.
    pub residual: f64,
}

/// Breaks `j_max` sticks with `W_k ~ Beta(params(k))`, `k = 1..=j_max`.
pub fn stick_breaking(
    params: impl Fn(usize) -> (f64, f64),
    j_max: usize,
    rng: &mut SimRng,
) -> Result<StickBreaking> {
    let mut sticks = Vec::with_capacity(j_max);
    let mut weights = Vec::with_capacity(j_max);
    let mut residual = 1.0;
    for k in 1..=j_max {
        let (a, b) = params(k);
        let w = BetaDist::new(a, b)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(rng);
        sticks.push(w);
        weights.push(residual * w);
        residual *= 1.0 - w;
    }
    Ok(StickBreaking {
        sticks,
        weights,
        residual,
    })
}

/// GEM(θ) weights: i.i.d. `Beta(1, θ)` sticks.
pub fn gem_stick_breaking(theta: f64, j_max: usize, seed: u64) -> Result<StickBreaking> {
    LimitLaw::Gem { theta }.validate()?;
    stick_breaking(|_| (1.0, theta), j_max, &mut rng::stream(seed))
}

/// Pitman-Yor weights: `W_k ~ Beta(1 − d, θ + k d)`. With `d = 0` this consumes the
/// stream exactly as [`gem_stick_breaking`] does.
pub fn pitman_yor_weights(
    discount: f64,
    theta: f64,
    j_max: usize,
    seed: u64,
) -> Result<StickBreaking> {
    LimitLaw::PitmanYor {
        discount,
        strength: theta,
    }
    .validate()?;
    stick_breaking(
        |k| (1.0 - discount, theta + k as f64 * discount),
        j_max,
        &mut rng::stream(seed),
    )
}

/// One-sample Kolmogorov-Smirnov statistic `sup_x |F_n(x) − F(x)|`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 99% critical value of the one-sample KS statistic.
pub fn ks_critical_99(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Initial stake `n_0` as a function of the initial supply `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StakeRule {
    /// `n_0 = c`.
    Constant { c: f64 },
    /// `n_0 = c N^β`.
    Power { c: f64, beta: f64 },
    /// `n_0 = p N`.
    Fraction { p: f64 },
}

impl StakeRule {
    pub fn stake(&self, n: f64) -> f64 {
        match *self {
            StakeRule::Constant { c } => c,
            StakeRule::Power { c, beta } => c * n.powf(beta),
            StakeRule::Fraction { p } => p * n,
        }
    }

    /// Growth exponent `β` in `n_0 = Θ(N^β)`.
    pub fn exponent(&self) -> f64 {
        match *self {
            StakeRule::Constant { .. } => 0.0,
            StakeRule::Power { beta, .. } => beta,
            StakeRule::Fraction { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvestorClass {
    Large,
    Medium,
    Small,
}

/// What is known about `π_{k,∞}/π_{k,0}` for a classified investor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statement", rename_all = "snake_case")]
pub enum LimitStatement {
    /// The ratio concentrates at 1. `bound` is the explicit deviation bound when its
    /// constant is known; otherwise `scale` is its order `1/(N^{α/(1−α)} n_0)`.
    Concentrates {
        bound: Option<f64>,
        scale: Option<f64>,
    },
    /// The ratio converges in law.
    Law { law: LimitLaw },
    /// `var` of the ratio stays of order one and `P(|ratio − 1| > ε) ≥ c > 0`.
    AntiConcentration,
    /// The variance of the ratio diverges (and, for constant rewards, the ratio
    /// tends to zero in probability).
    VarianceDiverges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub regime: Regime,
    /// `None` under geometric rewards, where size does not matter.
    pub class: Option<InvestorClass>,
    /// Exponent `e` of the medium-investor scale `n_0 = Θ(N^e)`.
    pub threshold_exponent: Option<f64>,
    pub statement: LimitStatement,
}

const EXPONENT_TOL: f64 = 1e-9;

/// Classifies an investor whose stake follows `stake` in the regime of `schedule`,
/// evaluated at initial supply `n`, and states the matching limit result.
///
/// Thresholds on `n_0 = Θ(N^e)`: `e = 0` for constant or bounded-away rewards,
/// `e = −1` for `R_t = Θ(t^{−α})` with `α > 1/2`, `e = −α/(1−α)` for `α < 1/2`,
/// `e = γ` for `R_t = ρ N_{t−1}^γ` with `γ < 1`.
pub fn classify_and_limit(
    schedule: &RewardSchedule,
    n: f64,
    stake: &StakeRule,
    eps: f64,
) -> Result<Classification> {
    let regime = Regime::of(schedule)?;
    let n0 = stake.stake(n);
    if !(n0 > 0.0 && n0 < n) {
        return Err(Error::invalid(format!(
            "initial stake {n0} must lie in (0, {n})"
        )));
    }
    let threshold = match regime {
        Regime::Constant { .. } | Regime::BoundedAway { .. } => 0.0,
        Regime::FastDecay { .. } => -1.0,
        Regime::SlowDecay { alpha } => -alpha / (1.0 - alpha),
        Regime::SubGeometric { gamma, .. } => gamma,
        Regime::Geometric { .. } => {
            return Ok(Classification {
                regime,
                class: None,
                threshold_exponent: None,
                statement: LimitStatement::Law {
                    law: LimitLaw::TwoPoint { p: n0 / n },
                },
            })
        }
    };
    let beta = stake.exponent();
    let class = if beta > threshold + EXPONENT_TOL {
        InvestorClass::Large
    } else if beta < threshold - EXPONENT_TOL {
        InvestorClass::Small
    } else {
        InvestorClass::Medium
    };
    let statement = match (class, regime) {
        (InvestorClass::Large, Regime::SlowDecay { alpha }) => LimitStatement::Concentrates {
            bound: None,
            scale: Some(moments::concentration_scale(alpha, n, n0)),
        },
        (InvestorClass::Large, _) => LimitStatement::Concentrates {
            bound: Some(moments::concentration_bound(schedule, n, n0, eps)?),
            scale: None,
        },
        (InvestorClass::Medium, Regime::Constant { reward }) => LimitStatement::Law {
            law: LimitLaw::gamma_ratio(n0, reward),
        },
        // For fast decay only var = Θ(1) is known; reported alongside the others.
        (InvestorClass::Medium, _) => LimitStatement::AntiConcentration,
        (InvestorClass::Small, _) => LimitStatement::VarianceDiverges,
    };
    Ok(Classification {
        regime,
        class: Some(class),
        threshold_exponent: Some(threshold),
        statement,
    })
}
