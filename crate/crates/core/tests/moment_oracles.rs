use proptest::prelude::*;
use stakelab::moments::{self, a_bounds, a_sequence, central_identity_residuals, raw_moment_table};
use stakelab::RewardSchedule;

/// `E[(π_T)^j]` and `E[(π_T − π_0)^j]`, `j = 1..=4`, by summing over all `2^T` paths.
fn enumerate(schedule: &RewardSchedule, coins: [f64; 2], horizon: u32) -> ([f64; 4], [f64; 4]) {
    let pi0 = coins[0] / (coins[0] + coins[1]);
    let mut raw = [0.0; 4];
    let mut central = [0.0; 4];
    let mut stack = vec![(coins, 1.0f64, 0u32)];
    while let Some((c, p, t)) = stack.pop() {
        let supply = c[0] + c[1];
        if t == horizon {
            let x = c[0] / supply;
            for j in 0..4 {
                raw[j] += p * x.powi(j as i32 + 1);
                central[j] += p * (x - pi0).powi(j as i32 + 1);
            }
            continue;
        }
        let r = schedule.reward_at(u64::from(t) + 1, supply).unwrap();
        stack.push(([c[0] + r, c[1]], p * c[0] / supply, t + 1));
        stack.push(([c[0], c[1] + r], p * c[1] / supply, t + 1));
    }
    (raw, central)
}

#[test]
fn moment_table_matches_path_enumeration() {
    let schedules = [
        RewardSchedule::constant(1.0),
        RewardSchedule::power_decay(1.0, 0.6),
    ];
    for s in &schedules {
        for coins in [[1.0, 1.0], [1.0, 4.0], [3.0, 0.5]] {
            let pi0 = coins[0] / (coins[0] + coins[1]);
            let table = raw_moment_table(s, coins[0] + coins[1], pi0, 12).unwrap();
            for t in [1u32, 5, 12] {
                let (raw, central) = enumerate(s, coins, t);
                let row = &table.rows[t as usize];
                for (j, (got, want)) in row.raw.iter().zip(&raw).enumerate() {
                    assert!(
                        (got - want).abs() <= 1e-12 * want.abs(),
                        "{s:?} t={t} j={j}"
                    );
                }
                let mu = [row.mu2, row.mu3, row.mu4];
                for j in 1..4 {
                    assert!(
                        (mu[j - 1] - central[j]).abs()
                            <= 1e-12 * central[1].abs().max(central[j].abs())
                    );
                }
                assert!((row.a * pi0 * (1.0 - pi0) - central[1]).abs() <= 1e-12 * central[1]);
            }
        }
    }
}

#[test]
fn constant_reward_a_matches_closed_form() {
    for n in [2.0, 100.0, 1e4] {
        let a = a_sequence(&RewardSchedule::constant(1.0), n, 100_000).unwrap();
        for pi0 in [0.5, 0.01] {
            for (i, &at) in a.iter().enumerate() {
                let t = i as f64 + 1.0;
                // Telescoped product: a_t = t R² / ((N + R)(N + t R)).
                let closed = t / ((n + 1.0) * (n + t)) * pi0 * (1.0 - pi0);
                let v = at * pi0 * (1.0 - pi0);
                assert!((v - closed).abs() <= 1e-12 * closed, "n={n} t={t}");
            }
            let lib =
                moments::constant_reward_variance(1.0, n, moments::Time::At(100_000), pi0).unwrap();
            assert!((lib - a[99_999] * pi0 * (1.0 - pi0)).abs() <= 1e-12 * lib);
        }
    }
}

#[test]
fn a_bounds_hold_along_the_sequence() {
    let cases = [
        (RewardSchedule::constant(1.0), 100.0),
        (RewardSchedule::floor_decay(1.0, 1.0, 0.999), 1700.0),
        (RewardSchedule::power_decay(1.0, 0.6), 50.0),
        (RewardSchedule::power_decay(2.0, 0.9), 10.0),
        (RewardSchedule::proportional(1.0, 0.1), 100.0),
        (RewardSchedule::proportional(0.5, 0.5), 30.0),
    ];
    for (s, n) in &cases {
        let a = a_sequence(s, *n, 20_000).unwrap();
        for t in [1u64, 2, 10, 1000, 20_000] {
            let b = a_bounds(s, *n, t).unwrap();
            let at = a[t as usize - 1];
            if let Some(lo) = b.lower {
                assert!(at >= lo * (1.0 - 1e-12), "{s:?} t={t}: {at} < {lo}");
            }
            if let Some(hi) = b.upper {
                assert!(at <= hi * (1.0 + 1e-12), "{s:?} t={t}: {at} > {hi}");
            }
        }
    }
}

#[test]
fn slow_decay_a_scales_with_the_stated_exponent() {
    // a_T ≈ C N^{−1/(1−α)} once T ≥ N^{1/(1−α)}.
    let alpha = 0.25;
    let s = RewardSchedule::power_decay(1.0, alpha);
    let (n1, n2) = (20.0f64, 80.0f64);
    let t = (n2.powf(1.0 / (1.0 - alpha)) * 50.0) as u64;
    let a1 = *a_sequence(&s, n1, t).unwrap().last().unwrap();
    let a2 = *a_sequence(&s, n2, t).unwrap().last().unwrap();
    let slope = (a2 / a1).ln() / (n2 / n1).ln();
    assert!((slope + 1.0 / (1.0 - alpha)).abs() < 0.1, "slope {slope}");
}

#[test]
fn higher_central_moments_shrink_with_supply() {
    // Constant reward: μ3 = O(N^{-2}) and μ4 = O(N^{-2}) at fixed π0, so the
    // standardized skewness and excess kurtosis vanish.
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for n in [100.0, 400.0, 1600.0] {
        let table = raw_moment_table(&RewardSchedule::constant(1.0), n, 0.3, 20_000).unwrap();
        let row = table.rows.last().unwrap();
        let skew = row.mu3.abs() / row.mu2.powf(1.5);
        let kurt = (row.mu4 / (row.mu2 * row.mu2) - 3.0).abs();
        assert!(skew < prev.0 && kurt < prev.1);
        prev = (skew, kurt);
    }
    let table = raw_moment_table(&RewardSchedule::constant(1.0), 1600.0, 0.3, 20_000).unwrap();
    let (r3, r4) = central_identity_residuals(&table);
    assert!(r3 < 1e-10 && r4 < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_identities_hold(
        n in 1.5f64..1e4,
        pi0 in 0.001f64..0.999,
        kind in 0usize..4,
        horizon in 1u64..400,
    ) {
        let s = match kind {
            0 => RewardSchedule::constant(1.0),
            1 => RewardSchedule::floor_decay(0.5, 2.0, 0.99),
            2 => RewardSchedule::power_decay(1.0, 0.7),
            _ => RewardSchedule::proportional(0.01, 0.5),
        };
        let table = raw_moment_table(&s, n, pi0, horizon).unwrap();
        let (r3, r4) = central_identity_residuals(&table);
        prop_assert!(r3 < 1e-10 && r4 < 1e-10);
        for row in &table.rows {
            prop_assert!((row.raw[0] - pi0).abs() < 1e-12);
            prop_assert!(row.a >= 0.0 && row.a < 1.0);
            prop_assert!(row.mu4 >= row.mu2 * row.mu2 * (1.0 - 1e-9));
        }
        let a = a_sequence(&s, n, horizon).unwrap();
        prop_assert!(a.windows(2).all(|w| w[1] >= w[0]));
    }
}
