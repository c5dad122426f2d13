//! Exact reference computations used by the checks, written independently of the
//! library's own recursions.

use stakelab::moments::MomentTable;
use stakelab::RewardSchedule;

/// `var(π_t)` under a constant reward `R`: the product `Π_{n≤t}(1 − R²/(N+nR)²)`
/// telescopes to `N(N + (t+1)R)/((N+R)(N+tR))`, leaving `t R²/((N+R)(N+tR)) π_0(1−π_0)`.
pub fn constant_reward_variance(reward: f64, n: f64, t: u64, pi0: f64) -> f64 {
    let t = t as f64;
    t * reward * reward / ((n + reward) * (n + t * reward)) * pi0 * (1.0 - pi0)
}

/// `E[π_T^j]`, `j = 1..=4`, for investor 0 of a two-investor urn, by summing over
/// all `2^T` selection paths.
pub fn enumerate_raw_moments(
    schedule: &RewardSchedule,
    coins: [f64; 2],
    horizon: u32,
) -> stakelab::Result<[f64; 4]> {
    fn walk(
        s: &RewardSchedule,
        c: [f64; 2],
        p: f64,
        t: u32,
        horizon: u32,
        acc: &mut [f64; 4],
    ) -> stakelab::Result<()> {
        let supply = c[0] + c[1];
        if t == horizon {
            let x = c[0] / supply;
            let mut power = 1.0;
            for m in acc.iter_mut() {
                power *= x;
                *m += p * power;
            }
            return Ok(());
        }
        let r = s.reward_at(u64::from(t) + 1, supply)?;
        walk(s, [c[0] + r, c[1]], p * c[0] / supply, t + 1, horizon, acc)?;
        walk(s, [c[0], c[1] + r], p * c[1] / supply, t + 1, horizon, acc)
    }
    let mut acc = [0.0; 4];
    walk(schedule, coins, 1.0, 0, horizon, &mut acc)?;
    Ok(acc)
}

/// Largest relative violation of the one-step identities for the third and fourth
/// central moments along a moment table.
///
/// With `X = π_t − π_0`, `b = R_{t+1}/N_{t+1}`, `a = 1 − b`, `p = π_0`, `q = 1 − p`:
/// `μ3' = (a³ + 3a²b) μ3 + 3ab²(q² − p²) μ2 + b³ pq(q − p)` and
/// `μ4' = (a⁴ + 4a³b) μ4 + 6a²b²(pq μ2 + (q² − p²) μ3) + 4ab³(q³ + p³) μ2 + b⁴ pq(q³ + p³)`.
pub fn central_step_residuals(table: &MomentTable) -> (f64, f64) {
    let p = table.pi0;
    let q = 1.0 - p;
    let mut worst = (0.0f64, 0.0f64);
    for (w, &b) in table.rows.windows(2).zip(&table.step_weights) {
        let (prev, next) = (&w[0], &w[1]);
        let a = 1.0 - b;
        let (m2, m3, m4) = (prev.mu2, prev.mu3, prev.mu4);
        let t3 = [
            (a.powi(3) + 3.0 * a * a * b) * m3,
            3.0 * a * b * b * (q * q - p * p) * m2,
            b.powi(3) * p * q * (q - p),
        ];
        let t4 = [
            (a.powi(4) + 4.0 * a.powi(3) * b) * m4,
            6.0 * a * a * b * b * (p * q * m2 + (q * q - p * p) * m3),
            4.0 * a * b.powi(3) * (q.powi(3) + p.powi(3)) * m2,
            b.powi(4) * p * q * (q.powi(3) + p.powi(3)),
        ];
        let rel = |terms: &[f64], value: f64| {
            let scale: f64 = terms
                .iter()
                .map(|x| x.abs())
                .sum::<f64>()
                .max(f64::MIN_POSITIVE);
            (terms.iter().sum::<f64>() - value).abs() / scale
        };
        worst.0 = worst.0.max(rel(&t3, next.mu3));
        worst.1 = worst.1.max(rel(&t4, next.mu4));
    }
    worst
}

/// Probability of the selection sequence `pattern` from an urn with `initial` coins
/// and constant reward.
pub fn pattern_probability(initial: &[f64], reward: f64, pattern: &[usize]) -> f64 {
    let mut coins = initial.to_vec();
    let mut supply: f64 = coins.iter().sum();
    let mut p = 1.0;
    for &k in pattern {
        p *= coins[k] / supply;
        coins[k] += reward;
        supply += reward;
    }
    p
}

/// Largest relative spread of pattern probabilities within a permutation class, over
/// all patterns on two investors of length at most `max_len`.
pub fn permutation_defect(initial: [f64; 2], reward: f64, max_len: u32) -> f64 {
    let mut worst: f64 = 0.0;
    for len in 1..=max_len {
        // Patterns with the same number of ones are permutations of each other.
        let mut by_ones: Vec<Option<f64>> = vec![None; len as usize + 1];
        for code in 0u32..(1 << len) {
            let pattern: Vec<usize> = (0..len).map(|i| ((code >> i) & 1) as usize).collect();
            let p = pattern_probability(&initial, reward, &pattern);
            let slot = &mut by_ones[code.count_ones() as usize];
            match *slot {
                None => *slot = Some(p),
                Some(first) => worst = worst.max((p - first).abs() / first),
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use stakelab::moments::raw_moment_table;

    #[test]
    fn enumeration_small_case_by_hand() {
        // Coins (1, 1), R = 1, one step: π = 2/3 or 1/3 with equal odds.
        let m = enumerate_raw_moments(&RewardSchedule::constant(1.0), [1.0, 1.0], 1).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-16);
        assert!((m[1] - 5.0 / 18.0).abs() < 1e-16);
    }

    #[test]
    fn closed_form_limit() {
        let v = constant_reward_variance(1.0, 9.0, u64::MAX, 0.5);
        assert!((v - 0.25 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn identities_hold_on_library_tables() {
        let t = raw_moment_table(&RewardSchedule::power_decay(1.0, 0.6), 50.0, 0.2, 500).unwrap();
        let (r3, r4) = central_step_residuals(&t);
        assert!(r3 < 1e-12 && r4 < 1e-12, "{r3} {r4}");
    }

    #[test]
    fn constant_reward_patterns_are_exchangeable() {
        assert!(permutation_defect([1.0, 2.0], 1.0, 6) < 1e-14);
        assert!(permutation_defect([0.3, 5.0], 2.5, 6) < 1e-14);
    }
}
