use stakelab::limit_laws::{self, ks_critical_99, ks_distance, LimitLaw, Samples};
use stakelab::urn::{ensemble, EnsembleConfig, UrnConfig};
use stakelab::RewardSchedule;

fn terminal_ratios(
    coins: Vec<f64>,
    schedule: RewardSchedule,
    horizon: u64,
    replicates: u64,
    seed: u64,
) -> Vec<f64> {
    let cfg = EnsembleConfig {
        urn: UrnConfig::new(coins, schedule, horizon).tracked(vec![0]),
        replicates,
        seed,
        thresholds: vec![],
        keep_terminal: true,
    };
    ensemble(&cfg).unwrap().tracked[0].terminal_ratios()
}

#[test]
fn medium_investor_ratio_approaches_the_gamma_law() {
    // n0 = R = 2: the ratio tends to Gamma(2, 1/2) as N grows.
    let law = LimitLaw::gamma_ratio(2.0, 2.0);
    let mut distances = Vec::new();
    for n in [8.0, 200.0] {
        let ratios = terminal_ratios(
            vec![2.0, n - 2.0],
            RewardSchedule::constant(2.0),
            20_000,
            4000,
            11,
        );
        distances.push(ks_distance(&ratios, |x| law.cdf(x).unwrap()));
    }
    assert!(distances[1] < ks_critical_99(4000), "{distances:?}");
    assert!(distances[0] > distances[1]);
}

#[test]
fn finite_supply_limit_is_beta() {
    let ratios = terminal_ratios(
        vec![3.0, 7.0],
        RewardSchedule::constant(1.0),
        20_000,
        3000,
        5,
    );
    let shares: Vec<f64> = ratios.iter().map(|r| r * 0.3).collect();
    let beta = LimitLaw::Beta { a: 3.0, b: 7.0 };
    let d = ks_distance(&shares, |x| beta.cdf(x).unwrap());
    // Residual movement after 2·10^4 steps is O(1/√T) in share.
    assert!(d < ks_critical_99(3000) + 0.01, "{d}");
}

#[test]
fn dirichlet_marginals_are_beta() {
    let law = LimitLaw::Dirichlet {
        concentration: vec![0.5, 2.0, 3.5],
    };
    let Samples::Vector(xs) = limit_laws::sample_limit(&law, 5000, 3).unwrap() else {
        panic!()
    };
    assert!(xs
        .iter()
        .all(|x| (x.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    let first: Vec<f64> = xs.iter().map(|x| x[1]).collect();
    let marginal = LimitLaw::Beta { a: 2.0, b: 4.0 };
    assert!(ks_distance(&first, |x| marginal.cdf(x).unwrap()) < ks_critical_99(5000));
}

#[test]
fn gem_residual_has_geometric_mean() {
    // E[Π_{i≤j}(1 − W_i)] = (θ/(1+θ))^j.
    let (theta, j) = (3.0, 5);
    let reps = 20_000;
    let residuals: Vec<f64> = (0..reps)
        .map(|s| {
            limit_laws::gem_stick_breaking(theta, j, s)
                .unwrap()
                .residual
        })
        .collect();
    let m = stakelab::stats::MeanVar::from_slice(&residuals);
    let expected = (theta / (1.0 + theta)).powi(j as i32);
    assert!(
        (m.mean - expected).abs() < 4.0 * m.std_error(),
        "{} vs {expected}",
        m.mean
    );
}

#[test]
fn geometric_growth_absorbs_in_proportion_to_initial_share() {
    // Growth fast enough to blow up within a few hundred steps.
    let ratios = terminal_ratios(
        vec![25.0, 75.0],
        RewardSchedule::proportional(0.05, 1.5),
        5000,
        2000,
        9,
    );
    let shares: Vec<f64> = ratios.iter().map(|r| r * 0.25).collect();
    let won = shares.iter().filter(|&&s| s > 0.99).count() as f64 / 2000.0;
    let lost = shares.iter().filter(|&&s| s < 0.01).count() as f64 / 2000.0;
    assert!(won + lost > 0.99);
    let se = (0.25f64 * 0.75 / 2000.0).sqrt();
    assert!((won - 0.25).abs() < 4.0 * se, "{won}");
}
