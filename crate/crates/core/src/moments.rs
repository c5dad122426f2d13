//! Exact moments of a single investor's share and the Chebyshev-type bounds built on them.
//!
//! Writing `b_t = R_t/N_t`, the variance factor obeys `a_1 = b_1²` and
//! `a_{t+1} = a_t + b_{t+1}²(1 − a_t)`, with `var(π_{k,t}) = a_t π_0(1 − π_0)`.
//! Equivalently `1 − a_t = Π_{n≤t}(1 − b_n²)`, which is how it is evaluated here:
//! the logarithms are summed with compensation so that `a_t` keeps full relative
//! precision over long horizons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{RewardPath, RewardSchedule};
use crate::stats::CompensatedSum;

/// Regime of a reward rule, as used by the variance and concentration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `R_t ≡ R`.
    Constant { reward: f64 },
    /// Non-increasing with a positive limit `floor`.
    BoundedAway { floor: f64 },
    /// `R_t = Θ(t^{-α})`, `α > 1/2`.
    FastDecay { alpha: f64 },
    /// `R_t = Θ(t^{-α})`, `α < 1/2`.
    SlowDecay { alpha: f64 },
    /// `R_t = ρ N_{t-1}^γ`, `γ < 1`.
    SubGeometric { rho: f64, gamma: f64 },
    /// `R_t = ρ N_{t-1}^γ`, `γ > 1`.
    Geometric { rho: f64, gamma: f64 },
}

impl Regime {
    /// Classifies a schedule. The boundary cases `α = 1/2` and `γ = 1` have no
    /// known bounds and are rejected.
    pub fn of(schedule: &RewardSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(match *schedule {
            RewardSchedule::Constant { reward } => Regime::Constant { reward },
            RewardSchedule::FloorDecay { floor, .. } => Regime::BoundedAway { floor },
            RewardSchedule::PowerDecay { floor, .. } if floor > 0.0 => {
                Regime::BoundedAway { floor }
            }
            RewardSchedule::PowerDecay { alpha, .. } if alpha > 0.5 => Regime::FastDecay { alpha },
            RewardSchedule::PowerDecay { alpha, .. } if alpha < 0.5 => Regime::SlowDecay { alpha },
            RewardSchedule::Proportional { rho, gamma } if gamma < 1.0 => {
                Regime::SubGeometric { rho, gamma }
            }
            RewardSchedule::Proportional { rho, gamma } if gamma > 1.0 => {
                Regime::Geometric { rho, gamma }
            }
            other => {
                return Err(Error::UnclassifiedRegime(format!(
                    "{other:?} lies on a regime boundary"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Constant { .. } => "constant",
            Regime::BoundedAway { .. } => "bounded_away",
            Regime::FastDecay { .. } => "fast_decay",
            Regime::SlowDecay { .. } => "slow_decay",
            Regime::SubGeometric { .. } => "sub_geometric",
            Regime::Geometric { .. } => "geometric",
        }
    }
}

/// `a_1..a_T`. Stops early (shorter output) if the supply overflows.
pub fn a_sequence(schedule: &RewardSchedule, n: f64, horizon: u64) -> Result<Vec<f64>> {
    let path = RewardPath::new(schedule, n, horizon)?;
    Ok(a_sequence_on_path(&path))
}

pub fn a_sequence_on_path(path: &RewardPath) -> Vec<f64> {
    let mut log_keep = CompensatedSum::default();
    (1..=path.len())
        .map(|t| {
            let b = path.reward(t) / path.supply(t);
            log_keep.add((-b * b).ln_1p());
            -log_keep.value().exp_m1()
        })
        .collect()
}

/// A time index that may be `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Time {
    At(u64),
    Infinity,
}

/// Closed-form `var(π_{k,t})` for a constant reward `R`:
/// `R²/(Rt+N)² (R t²/(N+R) + N t/(N+R)) π_0(1−π_0)`, and `R/(N+R) π_0(1−π_0)` at `t = ∞`.
pub fn constant_reward_variance(reward: f64, n: f64, t: Time, pi0: f64) -> Result<f64> {
    if !(reward > 0.0 && n > 0.0) {
        return Err(Error::invalid("reward and supply must be positive"));
    }
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Error::invalid(format!(
            "initial share must lie in [0,1], got {pi0}"
        )));
    }
    let spread = pi0 * (1.0 - pi0);
    Ok(match t {
        Time::Infinity => reward / (n + reward) * spread,
        Time::At(t) => {
            let t = t as f64;
            let r = reward;
            let lead = r * r / ((r * t + n) * (r * t + n));
            lead * (r / (n + r) * t * t + n / (n + r) * t) * spread
        }
    })
}

/// Exact moments of `π_{k,t}` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: u64,
    pub a: f64,
    /// Raw moments `E[π^j]`, `j = 1..=4`.
    pub raw: [f64; 4],
    /// Central moments `E[(π − π_0)^j]`, `j = 2..=4`.
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
}

impl MomentRow {
    /// Central moments `μ_0..μ_4` (with `μ_0 = 1`, `μ_1 = 0`).
    pub fn central(&self) -> [f64; 5] {
        [1.0, 0.0, self.mu2, self.mu3, self.mu4]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub pi0: f64,
    /// Rows for `t = 0..=T`.
    pub rows: Vec<MomentRow>,
    /// `R_t/N_t` for `t = 1..=T`, the weight of the step into row `t`.
    pub step_weights: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact raw moments `E[π_{k,t}^j]` and central moments `E[(π_{k,t} − π_0)^j]`, `j ≤ 4`.
///
/// With `a = N_t/N_{t+1}` and `b = R_{t+1}/N_{t+1}`, the raw moments follow
/// `m_j(t+1) = a^j m_j(t) + Σ_{i<j} C(j,i) a^i b^{j−i} m_{i+1}(t)`. The central moments
/// are propagated through the centered update `X' = aX + b(1_S − π_0)` rather than
/// recovered from the raw ones, which would cancel catastrophically for large `N`.
pub fn raw_moment_table(
    schedule: &RewardSchedule,
    n: f64,
    pi0: f64,
    horizon: u64,
) -> Result<MomentTable> {
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Error::invalid(format!(
            "initial share must lie in [0,1], got {pi0}"
        )));
    }
    let path = RewardPath::new(schedule, n, horizon)?;
    let a_seq = a_sequence_on_path(&path);
    // E[(1_S − π_0)^m | X] = c[m] + d[m] X
    let (p, q) = (pi0, 1.0 - pi0);
    let c: Vec<f64> = (0..=4).map(|m| p * q.powi(m) + q * (-p).powi(m)).collect();
    let d: Vec<f64> = (0..=4).map(|m| q.powi(m) - (-p).powi(m)).collect();

    let mut raw = [0.0; 5];
    for (j, r) in raw.iter_mut().enumerate() {
        *r = pi0.powi(j as i32);
    }
    let mut mu = [1.0, 0.0, 0.0, 0.0, 0.0];
    let row = |t: u64, a: f64, raw: &[f64; 5], mu: &[f64; 5]| MomentRow {
        t,
        a,
        raw: [raw[1], raw[2], raw[3], raw[4]],
        mu2: mu[2],
        mu3: mu[3],
        mu4: mu[4],
    };
    let mut rows = Vec::with_capacity(a_seq.len() + 1);
    let mut weights = Vec::with_capacity(a_seq.len());
    rows.push(row(0, 0.0, &raw, &mu));
    for t in 1..=path.len() {
        let b = path.reward(t) / path.supply(t);
        let a = path.supply(t - 1) / path.supply(t);
        let mut next_raw = raw;
        let mut next_mu = mu;
        for j in 1..=4usize {
            let mut r = a.powi(j as i32) * raw[j];
            let mut m = 0.0;
            for i in 0..j {
                let w = binomial(j, i) * a.powi(i as i32) * b.powi((j - i) as i32);
                r += w * raw[i + 1];
                m += w * (c[j - i] * mu[i] + d[j - i] * mu[i + 1]);
            }
            next_raw[j] = r;
            next_mu[j] = m + a.powi(j as i32) * mu[j];
        }
        next_mu[1] = 0.0;
        raw = next_raw;
        mu = next_mu;
        rows.push(row(t, a_seq[(t - 1) as usize], &raw, &mu));
        weights.push(b);
    }
    Ok(MomentTable {
        pi0,
        rows,
        step_weights: weights,
    })
}

/// Polynomial in `X = π − π_0` truncated at degree 4.
type Poly = [f64; 5];

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = [0.0; 5];
    for i in 0..5 {
        for j in 0..5 - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

/// `E[f(π)]` for a polynomial `f` given in powers of `X`, from central moments.
fn expect(f: &Poly, mu: &[f64; 5]) -> (f64, f64) {
    let value = f.iter().zip(mu).map(|(c, m)| c * m).sum();
    let scale = f.iter().zip(mu).map(|(c, m)| (c * m).abs()).sum();
    (value, scale)
}

/// Largest relative residual of the third- and fourth-moment step identities
///
/// `μ_3' = μ_3 + 3b² E[Xπ(1−π)] + b³ E[π(1−π)(1−2π)]`,
/// `μ_4' = μ_4 + 6b² E[X²π(1−π)] + 4b³ E[Xπ(1−π)(1−2π)] + b⁴ E[π(1−π)(1−3π+3π²)]`,
///
/// with `X = π − π_0` and `b = R_{t+1}/N_{t+1}`. Each residual is scaled by the sum
/// of the absolute values of the terms, so cancellation does not inflate it.
pub fn central_identity_residuals(table: &MomentTable) -> (f64, f64) {
    let p0 = table.pi0;
    let x: Poly = [0.0, 1.0, 0.0, 0.0, 0.0];
    let pi: Poly = [p0, 1.0, 0.0, 0.0, 0.0];
    let one_minus: Poly = [1.0 - p0, -1.0, 0.0, 0.0, 0.0];
    let spread = poly_mul(&pi, &one_minus);
    let tilt: Poly = [1.0 - 2.0 * p0, -2.0, 0.0, 0.0, 0.0];
    let pi_sq = poly_mul(&pi, &pi);
    let quartic: Poly =
        std::array::from_fn(|i| [1.0, 0.0, 0.0, 0.0, 0.0][i] - 3.0 * pi[i] + 3.0 * pi_sq[i]);
    let x_spread = poly_mul(&x, &spread);
    let x2_spread = poly_mul(&x, &x_spread);
    let spread_tilt = poly_mul(&spread, &tilt);
    let x_spread_tilt = poly_mul(&x, &spread_tilt);
    let spread_quartic = poly_mul(&spread, &quartic);

    let mut worst3: f64 = 0.0;
    let mut worst4: f64 = 0.0;
    for (pair, &b) in table.rows.windows(2).zip(&table.step_weights) {
        let mu = pair[0].central();
        let (b2, b3, b4) = (b * b, b * b * b, b * b * b * b);

        let (e1, s1) = expect(&x_spread, &mu);
        let (e2, s2) = expect(&spread_tilt, &mu);
        let rhs3 = mu[3] + 3.0 * b2 * e1 + b3 * e2;
        let scale3 = mu[3].abs() + 3.0 * b2 * s1 + b3 * s2;
        worst3 = worst3.max(relative(pair[1].mu3 - rhs3, scale3));

        let (f1, r1) = expect(&x2_spread, &mu);
        let (f2, r2) = expect(&x_spread_tilt, &mu);
        let (f3, r3) = expect(&spread_quartic, &mu);
        let rhs4 = mu[4] + 6.0 * b2 * f1 + 4.0 * b3 * f2 + b4 * f3;
        let scale4 = mu[4].abs() + 6.0 * b2 * r1 + 4.0 * b3 * r2 + b4 * r3;
        worst4 = worst4.max(relative(pair[1].mu4 - rhs4, scale4));
    }
    (worst3, worst4)
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        diff.abs()
    } else {
        diff.abs() / scale
    }
}

/// Bounds on `a_t` for one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ABounds {
    pub regime: String,
    /// Explicit lower bound, when the constant is known.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Exponent `e` with `a_t = Θ(N^e)` where only the order is known.
    pub scaling_exponent: Option<f64>,
    /// First `t` from which the bounds hold.
    pub valid_from: u64,
}

/// Bounds on `a_t` at time `t ≥ 1` for initial supply `n`.
///
/// - bounded away from zero: `(N−R_1) R̲² t / (N(N+R_1)(N+R_1(1+t))) ≤ a_t ≤ R_1/N`;
/// - fast decay: `R_1²/(N+R_1)² ≤ a_t ≤ Σ R_t²/N²`;
/// - slow decay: `a_t = Θ(N^{−1/(1−α)})` for `t ≥ N^{1/(1−α)}` (order only);
/// - sub-geometric: `a_t ≤ ρ/(1−γ) N^{γ−1}`, with the matching lower order `N^{γ−1}`.
///
/// Geometric and boundary schedules report no bounds under the tag `unbounded_analysis`.
pub fn a_bounds(schedule: &RewardSchedule, n: f64, t: u64) -> Result<ABounds> {
    let none = |regime: &str| ABounds {
        regime: regime.to_string(),
        lower: None,
        upper: None,
        scaling_exponent: None,
        valid_from: 1,
    };
    let regime = match Regime::of(schedule) {
        Ok(r) => r,
        Err(Error::UnclassifiedRegime(_)) => return Ok(none("unbounded_analysis")),
        Err(e) => return Err(e),
    };
    let r1 = schedule.first_reward(n)?;
    let tf = t as f64;
    Ok(match regime {
        Regime::Constant { reward: floor } | Regime::BoundedAway { floor } => ABounds {
            lower: Some((n - r1) * floor * floor * tf / (n * (n + r1) * (n + r1 * (1.0 + tf)))),
            upper: Some(r1 / n),
            ..none(regime.name())
        },
        Regime::FastDecay { .. } => ABounds {
            lower: Some(r1 * r1 / ((n + r1) * (n + r1))),
            upper: schedule.squared_reward_sum().map(|s| s / (n * n)),
            ..none(regime.name())
        },
        Regime::SlowDecay { alpha } => ABounds {
            scaling_exponent: Some(-1.0 / (1.0 - alpha)),
            valid_from: n.powf(1.0 / (1.0 - alpha)).ceil() as u64,
            ..none(regime.name())
        },
        Regime::SubGeometric { rho, gamma } => ABounds {
            upper: Some(rho / (1.0 - gamma) * n.powf(gamma - 1.0)),
            scaling_exponent: Some(gamma - 1.0),
            ..none(regime.name())
        },
        Regime::Geometric { .. } => none("unbounded_analysis"),
    })
}

/// Right-hand side of the uniform-in-time deviation bound
/// `P(|π_{k,t}/π_{k,0} − 1| > ε) ≤ bound` for an investor with `n0` initial coins.
///
/// Values above one are returned as they are. The slow-decay bound carries an
/// unspecified constant and is reported as [`Error::UnspecifiedConstant`]; use
/// [`concentration_scale`] for its order.
pub fn concentration_bound(schedule: &RewardSchedule, n: f64, n0: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && n0 > 0.0 && n > 0.0) {
        return Err(Error::invalid("epsilon, stake and supply must be positive"));
    }
    let e2 = eps * eps;
    match Regime::of(schedule)? {
        Regime::Constant { reward } => Ok(5.0 * reward / (4.0 * e2 * n0)),
        Regime::BoundedAway { .. } => Ok(schedule.first_reward(n)? / (e2 * n0)),
        Regime::FastDecay { .. } => {
            let s = schedule
                .squared_reward_sum()
                .ok_or_else(|| Error::invalid("squared rewards are not summable"))?;
            Ok(s / (e2 * n * n0))
        }
        Regime::SlowDecay { .. } => Err(Error::UnspecifiedConstant("slow_decay")),
        Regime::SubGeometric { rho, gamma } => Ok(rho * n.powf(gamma) / ((1.0 - gamma) * n0 * e2)),
        Regime::Geometric { .. } => Err(Error::UnclassifiedRegime(
            "geometric rewards do not concentrate".into(),
        )),
    }
}

/// `1/(N^{α/(1−α)} n0)`: the order of the slow-decay deviation bound.
pub fn concentration_scale(alpha: f64, n: f64, n0: f64) -> f64 {
    1.0 / (n.powf(alpha / (1.0 - alpha)) * n0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_sequence_small_cases() {
        let a = a_sequence(&RewardSchedule::constant(1.0), 2.0, 2).unwrap();
        assert!((a[0] - 1.0 / 9.0).abs() < 1e-16);
        assert!((a[1] - 1.0 / 6.0).abs() < 1e-16);
        let long = a_sequence(&RewardSchedule::constant(1.0), 2.0, 1_000_000).unwrap();
        assert!((long.last().unwrap() - 1.0 / 3.0).abs() < 1e-5);
        assert!(long.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn variance_examples() {
        let v = constant_reward_variance(1.0, 2.0, Time::At(1), 0.5).unwrap();
        assert!((v - 1.0 / 36.0).abs() < 1e-17);
        let inf = constant_reward_variance(1.0, 2.0, Time::Infinity, 0.5).unwrap();
        assert!((inf - 1.0 / 12.0).abs() < 1e-17);
        assert_eq!(
            constant_reward_variance(3.0, 7.0, Time::At(9), 1.0).unwrap(),
            0.0
        );
        assert_eq!(
            constant_reward_variance(3.0, 7.0, Time::At(9), 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn second_moment_example() {
        let table = raw_moment_table(&RewardSchedule::constant(1.0), 2.0, 0.5, 1).unwrap();
        assert!((table.rows[1].raw[1] - 5.0 / 18.0).abs() < 1e-16);
        assert_eq!(table.rows[1].raw[0], 0.5);
    }

    #[test]
    fn raw_and_central_agree() {
        let table = raw_moment_table(&RewardSchedule::power_decay(1.0, 0.6), 3.0, 0.3, 50).unwrap();
        let p = 0.3f64;
        for row in &table.rows {
            let [m1, m2, m3, m4] = row.raw;
            assert!((m1 - p).abs() < 1e-15);
            assert!((m2 - p * p - row.mu2).abs() < 1e-14);
            assert!((m3 - 3.0 * p * m2 + 2.0 * p.powi(3) - row.mu3).abs() < 1e-14);
            let mu4 = m4 - 4.0 * p * m3 + 6.0 * p * p * m2 - 3.0 * p.powi(4);
            assert!((mu4 - row.mu4).abs() < 1e-14);
            assert!((row.mu2 - row.a * p * (1.0 - p)).abs() < 1e-15);
        }
    }

    #[test]
    fn identities_hold_on_tables() {
        for (s, n, p) in [
            (RewardSchedule::constant(1.0), 2.0, 0.5),
            (RewardSchedule::floor_decay(1.0, 1.0, 0.999), 100.0, 0.01),
            (RewardSchedule::proportional(0.01, 0.5), 50.0, 0.2),
        ] {
            let table = raw_moment_table(&s, n, p, 2000).unwrap();
            let (r3, r4) = central_identity_residuals(&table);
            assert!(r3 < 1e-12 && r4 < 1e-12, "{s:?}: {r3} {r4}");
        }
    }

    #[test]
    fn bounds_examples() {
        let b = a_bounds(&RewardSchedule::floor_decay(1.0, 1.0, 0.999), 100.0, 10).unwrap();
        assert!((b.upper.unwrap() - 0.01999).abs() < 1e-15);
        let b = a_bounds(&RewardSchedule::power_decay(1.0, 0.6), 100.0, 10).unwrap();
        assert!((b.upper.unwrap() - 5.591_582_441_177_75e-4).abs() < 1e-12);
        let b = a_bounds(&RewardSchedule::proportional(1.0, 0.1), 100.0, 10).unwrap();
        assert!((b.upper.unwrap() - 100f64.powf(-0.9) / 0.9).abs() < 1e-15);
        let b = a_bounds(&RewardSchedule::power_decay(1.0, 0.3), 100.0, 10).unwrap();
        assert_eq!(b.upper, None);
        assert!((b.scaling_exponent.unwrap() + 1.0 / 0.7).abs() < 1e-15);
        let b = a_bounds(&RewardSchedule::proportional(0.001, 1.1), 1000.0, 10).unwrap();
        assert_eq!(b.regime, "unbounded_analysis");
    }

    #[test]
    fn concentration_examples() {
        let c = RewardSchedule::constant(1.0);
        assert!((concentration_bound(&c, 1000.0, 500.0, 0.05).unwrap() - 1.0).abs() < 1e-12);
        assert!((concentration_bound(&c, 10000.0, 5000.0, 0.05).unwrap() - 0.1).abs() < 1e-12);
        let s = RewardSchedule::proportional(1.0, 0.1);
        let v = concentration_bound(&s, 2000.0, 1000.0, 0.05).unwrap();
        assert!((v - 2000f64.powf(0.1) / (0.9 * 1000.0 * 0.0025)).abs() < 1e-12);
        assert!(matches!(
            concentration_bound(&RewardSchedule::power_decay(1.0, 0.1), 100.0, 1.0, 0.25),
            Err(Error::UnspecifiedConstant(_))
        ));
        assert!(matches!(
            Regime::of(&RewardSchedule::power_decay(1.0, 0.5)),
            Err(Error::UnclassifiedRegime(_))
        ));
    }
}
