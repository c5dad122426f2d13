//! Deterministic reward rules `R_t` and the supply paths `N_t = N_{t-1} + R_t` they induce.
//!
//! Rewards are indexed from `t = 1`: the investor selected at step `t` receives `R_t`
//! and the supply before that step is `N_{t-1}` (with `N_0 = N`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// A reward rule.
///
/// Serialized as a tagged object, e.g. `{"kind":"power_decay","c":1.0,"alpha":0.6}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSchedule {
    /// `R_t = reward`.
    Constant { reward: f64 },
    /// `R_t = floor + excess * rate^t` with `rate` in `(0, 1)`.
    FloorDecay { floor: f64, excess: f64, rate: f64 },
    /// `R_t = floor + c * t^{-alpha}`. The floor defaults to zero; a positive floor
    /// puts the rule in the bounded-away-from-zero class.
    PowerDecay {
        c: f64,
        alpha: f64,
        #[serde(default)]
        floor: f64,
    },
    /// `R_t = rho * N_{t-1}^gamma`.
    Proportional { rho: f64, gamma: f64 },
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

impl RewardSchedule {
    pub fn constant(reward: f64) -> Self {
        Self::Constant { reward }
    }

    pub fn floor_decay(floor: f64, excess: f64, rate: f64) -> Self {
        Self::FloorDecay {
            floor,
            excess,
            rate,
        }
    }

    pub fn power_decay(c: f64, alpha: f64) -> Self {
        Self::PowerDecay {
            c,
            alpha,
            floor: 0.0,
        }
    }

    pub fn proportional(rho: f64, gamma: f64) -> Self {
        Self::Proportional { rho, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { reward } => positive("reward", reward),
            Self::FloorDecay {
                floor,
                excess,
                rate,
            } => {
                positive("floor", floor)?;
                positive("excess", excess)?;
                if !(rate > 0.0 && rate < 1.0) {
                    return Err(Error::invalid(format!(
                        "rate must lie in (0,1), got {rate}"
                    )));
                }
                Ok(())
            }
            Self::PowerDecay { c, alpha, floor } => {
                positive("c", c)?;
                positive("alpha", alpha)?;
                if !(floor >= 0.0 && floor.is_finite()) {
                    return Err(Error::invalid(format!(
                        "floor must be nonnegative, got {floor}"
                    )));
                }
                Ok(())
            }
            Self::Proportional { rho, gamma } => {
                positive("rho", rho)?;
                positive("gamma", gamma)
            }
        }
    }

    /// Short machine name of the variant, matching the serde tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::FloorDecay { .. } => "floor_decay",
            Self::PowerDecay { .. } => "power_decay",
            Self::Proportional { .. } => "proportional",
        }
    }

    /// Reward paid at step `t >= 1` when the supply before the step is `prev_supply`.
    pub fn reward_at(&self, t: u64, prev_supply: f64) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("rewards are indexed from t = 1"));
        }
        let r = match *self {
            Self::Constant { reward } => reward,
            Self::FloorDecay {
                floor,
                excess,
                rate,
            } => floor + excess * rate.powf(t as f64),
            Self::PowerDecay { c, alpha, floor } => floor + c * (t as f64).powf(-alpha),
            Self::Proportional { rho, gamma } => {
                if !(prev_supply > 0.0) {
                    return Err(Error::invalid(format!(
                        "supply must be positive, got {prev_supply}"
                    )));
                }
                rho * prev_supply.powf(gamma)
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::SupplyOverflow { step: t })
        }
    }

    /// `N_t = N + Σ_{n=1}^t R_n`, accumulated step by step.
    pub fn supply_after(&self, n: f64, t: u64) -> Result<f64> {
        positive("initial supply", n)?;
        let mut supply = n;
        for step in 1..=t {
            supply += self.reward_at(step, supply)?;
            if !supply.is_finite() {
                return Err(Error::SupplyOverflow { step });
            }
        }
        Ok(supply)
    }

    /// `R_1` for initial supply `n`.
    pub fn first_reward(&self, n: f64) -> Result<f64> {
        self.reward_at(1, n)
    }

    /// Positive lower bound `inf_t R_t` when the rule is bounded away from zero.
    pub fn reward_floor(&self) -> Option<f64> {
        match *self {
            Self::Constant { reward } => Some(reward),
            Self::FloorDecay { floor, .. } => Some(floor),
            Self::PowerDecay { floor, .. } if floor > 0.0 => Some(floor),
            _ => None,
        }
    }

    /// `Σ_{t≥1} R_t²` when it is finite and supply-independent.
    pub fn squared_reward_sum(&self) -> Option<f64> {
        match *self {
            Self::PowerDecay { c, alpha, floor } if floor == 0.0 && alpha > 0.5 => {
                special::zeta(2.0 * alpha).ok().map(|z| c * c * z)
            }
            _ => None,
        }
    }

    /// True when `R_t` is non-increasing in `t`.
    pub fn is_non_increasing(&self) -> bool {
        !matches!(self, Self::Proportional { .. })
    }
}

/// Rewards `R_1..R_T` and supplies `N_0..N_T` along the (selection-independent) path.
///
/// If the supply overflows at step `s`, the path stops at `N_{s-1}` and records `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardPath {
    rewards: Vec<f64>,
    supplies: Vec<f64>,
    overflow: Option<u64>,
}

/// Supply paths are the same object viewed through `supply`.
pub type SupplyPath = RewardPath;

impl RewardPath {
    pub fn new(schedule: &RewardSchedule, n: f64, horizon: u64) -> Result<Self> {
        schedule.validate()?;
        positive("initial supply", n)?;
        let cap = usize::try_from(horizon).map_err(|_| Error::invalid("horizon too large"))?;
        let mut rewards = Vec::with_capacity(cap);
        let mut supplies = Vec::with_capacity(cap + 1);
        supplies.push(n);
        let mut supply = n;
        let mut overflow = None;
        for t in 1..=horizon {
            let r = match schedule.reward_at(t, supply) {
                Ok(r) => r,
                Err(Error::SupplyOverflow { step }) => {
                    overflow = Some(step);
                    break;
                }
                Err(e) => return Err(e),
            };
            let next = supply + r;
            if !next.is_finite() {
                overflow = Some(t);
                break;
            }
            rewards.push(r);
            supplies.push(next);
            supply = next;
        }
        Ok(Self {
            rewards,
            supplies,
            overflow,
        })
    }

    /// Number of steps available (the horizon, or the step before overflow).
    pub fn len(&self) -> u64 {
        self.rewards.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `R_t` for `1 <= t <= len()`.
    pub fn reward(&self, t: u64) -> f64 {
        self.rewards[(t - 1) as usize]
    }

    /// `N_t` for `0 <= t <= len()`.
    pub fn supply(&self, t: u64) -> f64 {
        self.supplies[t as usize]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn supplies(&self) -> &[f64] {
        &self.supplies
    }

    /// Step at which the supply left the range of `f64`, if it did.
    pub fn overflow_step(&self) -> Option<u64> {
        self.overflow
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reward_examples() {
        assert_eq!(
            RewardSchedule::constant(1.0).reward_at(5, 104.0).unwrap(),
            1.0
        );
        let fig3 = RewardSchedule::floor_decay(1.0, 1.0, 0.999);
        assert!((fig3.reward_at(1, 100.0).unwrap() - 1.999).abs() < 1e-15);
        // 0.001 * 1000^1.1 = 10^{-3} * 10^{3.3} = 10^{0.3}
        let geo = RewardSchedule::proportional(0.001, 1.1);
        let expected = 10f64.powf(0.3);
        assert!((geo.reward_at(1, 1000.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.99526).abs() < 1e-5);
    }

    #[test]
    fn supply_examples() {
        let c = RewardSchedule::constant(1.0);
        assert_eq!(c.supply_after(100.0, 50).unwrap(), 150.0);
        assert_eq!(c.supply_after(7.5, 0).unwrap(), 7.5);
        let p = RewardSchedule::power_decay(1.0, 0.6);
        let direct = 10.0 + 1.0 + 2f64.powf(-0.6);
        assert!((p.supply_after(10.0, 2).unwrap() - direct).abs() < 1e-14);
        assert!((direct - 11.659754).abs() < 1e-6);
    }

    #[test]
    fn reward_index_starts_at_one() {
        assert!(RewardSchedule::constant(1.0).reward_at(0, 1.0).is_err());
    }

    #[test]
    fn proportional_overflow_is_reported() {
        let s = RewardSchedule::proportional(1.0, 2.0);
        assert!(matches!(
            s.supply_after(10.0, 100),
            Err(Error::SupplyOverflow { .. })
        ));
        let path = RewardPath::new(&s, 10.0, 100).unwrap();
        let step = path.overflow_step().unwrap();
        assert_eq!(path.len(), step - 1);
        assert!(path.supplies().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn geometric_supply_is_superlinear() {
        let s = RewardSchedule::proportional(0.001, 1.1);
        let ratios: Vec<f64> = [500u64, 1000, 2000]
            .iter()
            .map(|&t| s.supply_after(1000.0, 2 * t).unwrap() / s.supply_after(1000.0, t).unwrap())
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
        assert!(ratios[2] > 10.0);
    }

    #[test]
    fn serde_tags() {
        let s: RewardSchedule =
            serde_json::from_str(r#"{"kind":"power_decay","c":1.0,"alpha":0.6}"#).unwrap();
        assert_eq!(s, RewardSchedule::power_decay(1.0, 0.6));
        let json = serde_json::to_string(&RewardSchedule::constant(2.0)).unwrap();
        assert_eq!(json, r#"{"kind":"constant","reward":2.0}"#);
        assert!(serde_json::from_str::<RewardSchedule>(r#"{"kind":"constant","r":1}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(RewardSchedule::floor_decay(1.0, 1.0, 1.0)
            .validate()
            .is_err());
        assert!(RewardSchedule::constant(-1.0).validate().is_err());
        assert!(RewardSchedule::power_decay(1.0, 0.0).validate().is_err());
        assert!(RewardSchedule::proportional(0.1, 0.5).validate().is_ok());
    }

    #[test]
    fn squared_sum_uses_zeta() {
        let s = RewardSchedule::power_decay(2.0, 1.0);
        let pi = std::f64::consts::PI;
        assert!((s.squared_reward_sum().unwrap() - 4.0 * pi * pi / 6.0).abs() < 1e-12);
        assert!(RewardSchedule::power_decay(1.0, 0.5)
            .squared_reward_sum()
            .is_none());
    }

    fn any_schedule() -> impl Strategy<Value = RewardSchedule> {
        prop_oneof![
            (0.01f64..10.0).prop_map(RewardSchedule::constant),
            (0.01f64..5.0, 0.01f64..5.0, 0.5f64..0.9999)
                .prop_map(|(f, e, q)| RewardSchedule::floor_decay(f, e, q)),
            (0.01f64..5.0, 0.05f64..3.0).prop_map(|(c, a)| RewardSchedule::power_decay(c, a)),
            (0.0001f64..0.01, 0.05f64..1.0).prop_map(|(r, g)| RewardSchedule::proportional(r, g)),
        ]
    }

    proptest! {
        #[test]
        fn supply_increment_is_the_reward(s in any_schedule(), n in 1.0f64..1e4, t in 0u64..300) {
            let before = s.supply_after(n, t).unwrap();
            let after = s.supply_after(n, t + 1).unwrap();
            let r = s.reward_at(t + 1, before).unwrap();
            prop_assert_eq!(after, before + r);
            let path = RewardPath::new(&s, n, t + 1).unwrap();
            prop_assert_eq!(path.supply(t + 1), after);
            prop_assert_eq!(path.reward(t + 1), r);
        }

        #[test]
        fn decaying_rules_do_not_increase(s in any_schedule(), a in 1u64..100_000, b in 1u64..100_000) {
            prop_assume!(s.is_non_increasing());
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(s.reward_at(hi, 1.0).unwrap() <= s.reward_at(lo, 1.0).unwrap());
            prop_assert!(s.reward_at(hi, 1.0).unwrap() > 0.0);
        }
    }
}
