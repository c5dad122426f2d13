//! Runs an [`ExperimentConfig`] over its `N` grid.

use anyhow::Result;
use stakelab::moments;
use stakelab::rng::child_seed;
use stakelab::stats::proportion_se;
use stakelab::RewardPath;

use crate::config::ExperimentConfig;
use crate::estimators::{EstimatorRegistry, Point};
use crate::output::{Cell, Table};

/// Seed of the grid point at supply `n`. Keyed on the value so that thinning the
/// grid leaves the remaining points unchanged.
pub fn point_seed(master: u64, n: f64) -> u64 {
    child_seed(master, &[n.to_bits()])
}

/// Per-snapshot ratio statistics of the tracked investor at one grid point.
fn series_rows(point: &Point, table: &mut Table) -> Result<()> {
    let s = point.urn()?;
    let pi0 = point.pi0();
    let path = RewardPath::new(&point.config.schedule, point.n, point.config.horizon)?;
    let a = moments::a_sequence_on_path(&path);
    let tracked = &s.tracked[0];
    for (j, &t) in s.times.iter().enumerate() {
        let m = &tracked.moments[j];
        let exact = match t {
            0 => Some(0.0),
            t => a.get(t as usize - 1).map(|a| a * (1.0 - pi0) / pi0),
        };
        let p = s.exceedance_fraction(0, 0, j);
        table.push(vec![
            point.n.into(),
            t.into(),
            (m.mean / pi0).into(),
            (m.std_error() / pi0).into(),
            (m.variance() / (pi0 * pi0)).into(),
            Cell::opt(exact),
            p.into(),
            proportion_se(p, s.replicates).into(),
        ]);
    }
    Ok(())
}

/// Evaluates every requested estimator at every grid point. Returns the estimates
/// table first, then the snapshot series (urn model) and any detail tables.
pub fn run_experiment(
    config: &ExperimentConfig,
    registry: &EstimatorRegistry,
) -> Result<Vec<Table>> {
    config.validate()?;
    let estimators = config
        .estimators
        .iter()
        .map(|name| registry.get(name))
        .collect::<Result<Vec<_>>>()?;
    let mut headers = vec!["N".to_string(), "n0".to_string()];
    for e in &estimators {
        headers.extend(e.columns(config));
    }
    let mut estimates = Table::new("estimates", headers);
    let mut series = Table::new(
        "series",
        [
            "N",
            "t",
            "mean_ratio",
            "mean_ratio_se",
            "var_ratio",
            "var_ratio_exact",
            "p_dev",
            "p_dev_se",
        ]
        .map(String::from)
        .to_vec(),
    );
    let mut details: Vec<Table> = Vec::new();
    for &n in &config.n_grid {
        let point = Point::new(config, n, point_seed(config.seed, n));
        let mut row = vec![Cell::Float(n), Cell::Float(point.n0)];
        for e in &estimators {
            row.extend(e.evaluate(&point)?);
            if let Some(t) = e.detail(&point)? {
                match details.iter_mut().find(|d| d.name == t.name) {
                    Some(d) => d.extend(t)?,
                    None => details.push(t),
                }
            }
        }
        estimates.push(row);
        if point.has_urn() {
            series_rows(&point, &mut series)?;
        }
    }
    let mut tables = vec![estimates];
    if !series.rows.is_empty() {
        tables.push(series);
    }
    tables.extend(details);
    Ok(tables)
}
