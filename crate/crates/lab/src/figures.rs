//! Preset experiments reproducing the published figures as data files.

use std::collections::BTreeMap;

use anyhow::{anyhow, Result};
use stakelab::limit_laws::StakeRule;
use stakelab::RewardSchedule;

use crate::config::{grid, ExperimentConfig, HistogramOf, HistogramSpec, Model};

pub trait Figure: Send + Sync {
    fn name(&self) -> &'static str;
    fn caption(&self) -> &'static str;
    /// One experiment per panel; single-panel figures return one.
    fn panels(&self) -> Vec<ExperimentConfig>;
}

struct Preset {
    name: &'static str,
    caption: &'static str,
    build: fn() -> Vec<ExperimentConfig>,
}

impl Figure for Preset {
    fn name(&self) -> &'static str {
        self.name
    }

    fn caption(&self) -> &'static str {
        self.caption
    }

    fn panels(&self) -> Vec<ExperimentConfig> {
        (self.build)()
    }
}

const HORIZON: u64 = 50_000;
const REPLICATES: u64 = 10_000;

fn base(
    name: &str,
    schedule: RewardSchedule,
    n_grid: Vec<f64>,
    initial: StakeRule,
    estimators: &[&str],
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        model: Model::Urn,
        schedule,
        n_grid,
        initial,
        investors: 2,
        horizon: HORIZON,
        replicates: REPLICATES,
        epsilon: 0.05,
        tail_levels: Vec::new(),
        histogram: HistogramSpec::default(),
        stride: 50,
        estimators: estimators.iter().map(|s| s.to_string()).collect(),
        seed: 0,
        out: None,
    }
}

fn half() -> StakeRule {
    StakeRule::Fraction { p: 0.5 }
}

fn one() -> StakeRule {
    StakeRule::Constant { c: 1.0 }
}

fn power(beta: f64) -> StakeRule {
    StakeRule::Power { c: 1.0, beta }
}

fn with_eps(mut c: ExperimentConfig, eps: f64) -> ExperimentConfig {
    c.epsilon = eps;
    c
}

fn fig1() -> Vec<ExperimentConfig> {
    vec![base(
        "fig1",
        RewardSchedule::constant(1.0),
        grid(1000.0, 10000.0, 500.0),
        half(),
        &["p_max"],
    )]
}

fn fig2a() -> Vec<ExperimentConfig> {
    let mut c = base(
        "fig2a",
        RewardSchedule::constant(1.0),
        vec![100.0],
        one(),
        &["histogram", "ks", "tail"],
    );
    c.histogram = HistogramSpec {
        of: HistogramOf::Ratio,
        lo: 0.0,
        hi: 8.0,
        bins: 80,
    };
    c.tail_levels = vec![0.5, 2.0];
    vec![c]
}

fn fig2b() -> Vec<ExperimentConfig> {
    vec![base(
        "fig2b",
        RewardSchedule::constant(1.0),
        grid(100.0, 300.0, 10.0),
        power(-1.1),
        &["tail", "variance"],
    )]
}

fn floor_decay() -> RewardSchedule {
    RewardSchedule::floor_decay(1.0, 1.0, 0.999)
}

fn one_plus_harmonic() -> RewardSchedule {
    RewardSchedule::PowerDecay {
        c: 1.0,
        alpha: 1.0,
        floor: 1.0,
    }
}

fn fig3() -> Vec<ExperimentConfig> {
    vec![base(
        "fig3",
        floor_decay(),
        grid(1700.0, 10700.0, 500.0),
        half(),
        &["p_max"],
    )]
}

fn fig4a() -> Vec<ExperimentConfig> {
    let c = base(
        "fig4a",
        one_plus_harmonic(),
        grid(100.0, 200.0, 10.0),
        one(),
        &["variance", "deviation"],
    );
    vec![with_eps(c, 0.5)]
}

fn fig4b() -> Vec<ExperimentConfig> {
    vec![base(
        "fig4b",
        one_plus_harmonic(),
        grid(100.0, 300.0, 10.0),
        power(-1.1),
        &["variance"],
    )]
}

fn fig5() -> Vec<ExperimentConfig> {
    vec![base(
        "fig5",
        RewardSchedule::power_decay(1.0, 0.6),
        grid(2000.0, 11000.0, 500.0),
        one(),
        &["p_max"],
    )]
}

fn fig6a() -> Vec<ExperimentConfig> {
    vec![base(
        "fig6a",
        RewardSchedule::power_decay(1.0, 0.6),
        grid(100.0, 200.0, 10.0),
        power(-1.0),
        &["variance"],
    )]
}

fn fig6b() -> Vec<ExperimentConfig> {
    vec![base(
        "fig6b",
        RewardSchedule::power_decay(1.0, 0.6),
        grid(50.0, 150.0, 5.0),
        power(-2.0),
        &["variance"],
    )]
}

fn fig7() -> Vec<ExperimentConfig> {
    let c = base(
        "fig7",
        RewardSchedule::power_decay(1.0, 0.1),
        grid(2000.0, 11000.0, 500.0),
        one(),
        &["p_max"],
    );
    vec![with_eps(c, 0.25)]
}

fn fig8a() -> Vec<ExperimentConfig> {
    let c = base(
        "fig8a",
        RewardSchedule::power_decay(1.0, 0.1),
        grid(100.0, 200.0, 10.0),
        power(-1.0 / 9.0),
        &["variance", "deviation"],
    );
    vec![with_eps(c, 0.5)]
}

fn fig8b() -> Vec<ExperimentConfig> {
    vec![base(
        "fig8b",
        RewardSchedule::power_decay(1.0, 0.1),
        grid(50.0, 150.0, 5.0),
        power(-1.0),
        &["variance"],
    )]
}

fn fig9() -> Vec<ExperimentConfig> {
    [
        (0.5, "fig9_half"),
        (0.25, "fig9_quarter"),
        (0.125, "fig9_eighth"),
    ]
    .into_iter()
    .map(|(p, name)| {
        let mut c = base(
            name,
            RewardSchedule::proportional(0.001, 1.1),
            vec![1000.0],
            StakeRule::Fraction { p },
            &["histogram", "absorption"],
        );
        c.horizon = 5000;
        c.stride = 0;
        c.histogram = HistogramSpec {
            of: HistogramOf::Share,
            lo: 0.0,
            hi: 1.0,
            bins: 100,
        };
        c
    })
    .collect()
}

fn fig10() -> Vec<ExperimentConfig> {
    vec![base(
        "fig10",
        RewardSchedule::proportional(1.0, 0.1),
        grid(2000.0, 11000.0, 500.0),
        half(),
        &["p_max"],
    )]
}

fn fig11a() -> Vec<ExperimentConfig> {
    let c = base(
        "fig11a",
        RewardSchedule::proportional(1.0, 0.1),
        grid(100.0, 200.0, 10.0),
        power(0.5),
        &["variance", "deviation"],
    );
    vec![with_eps(c, 0.5)]
}

fn fig11b() -> Vec<ExperimentConfig> {
    vec![base(
        "fig11b",
        RewardSchedule::proportional(1.0, 0.1),
        grid(100.0, 300.0, 10.0),
        power(0.01),
        &["variance"],
    )]
}

pub struct FigureRegistry {
    entries: BTreeMap<&'static str, Box<dyn Figure>>,
}

impl FigureRegistry {
    pub fn builtin() -> Self {
        let presets = [
            (
                "fig1",
                "Constant reward, large investors: P_max and its bound",
                fig1 as fn() -> _,
            ),
            (
                "fig2a",
                "Constant reward, medium investor: ratio histogram against the Gamma limit",
                fig2a,
            ),
            (
                "fig2b",
                "Constant reward, small investors: P(ratio < eps) and var(ratio)",
                fig2b,
            ),
            (
                "fig3",
                "R_t = 1 + 0.999^t, large investors: P_max and its bound",
                fig3,
            ),
            (
                "fig4a",
                "R_t = 1 + 1/t, medium investors: var(ratio) and P(|ratio - 1| > 0.5)",
                fig4a,
            ),
            ("fig4b", "R_t = 1 + 1/t, small investors: var(ratio)", fig4b),
            (
                "fig5",
                "R_t = t^-0.6, large investors: P_max and its bound",
                fig5,
            ),
            ("fig6a", "R_t = t^-0.6, medium investors: var(ratio)", fig6a),
            ("fig6b", "R_t = t^-0.6, small investors: var(ratio)", fig6b),
            (
                "fig7",
                "R_t = t^-0.1, large investors: P_max and its order",
                fig7,
            ),
            (
                "fig8a",
                "R_t = t^-0.1, medium investors: var(ratio) and P(|ratio - 1| > 0.5)",
                fig8a,
            ),
            ("fig8b", "R_t = t^-0.1, small investors: var(ratio)", fig8b),
            (
                "fig9",
                "R_t = 0.001 N_{t-1}^1.1: terminal share histograms for pi0 = 1/2, 1/4, 1/8",
                fig9,
            ),
            (
                "fig10",
                "R_t = N_{t-1}^0.1, large investors: P_max and its bound",
                fig10,
            ),
            (
                "fig11a",
                "R_t = N_{t-1}^0.1, medium investors: var(ratio) and P(|ratio - 1| > 0.5)",
                fig11a,
            ),
            (
                "fig11b",
                "R_t = N_{t-1}^0.1, small investors: var(ratio)",
                fig11b,
            ),
        ];
        let mut entries: BTreeMap<&'static str, Box<dyn Figure>> = BTreeMap::new();
        for (name, caption, build) in presets {
            entries.insert(
                name,
                Box::new(Preset {
                    name,
                    caption,
                    build,
                }),
            );
        }
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Result<&dyn Figure> {
        self.entries.get(name).map(|f| f.as_ref()).ok_or_else(|| {
            anyhow!(
                "unknown figure `{name}` (known: {})",
                self.names().join(", ")
            )
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Figure> {
        self.entries.values().map(|f| f.as_ref())
    }
}
