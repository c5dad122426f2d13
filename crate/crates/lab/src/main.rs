use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use stakelab::dynamical::expected_limit_ratio;
use stakelab::limit_laws::{classify_and_limit, LimitStatement};
use stakelab::moments::{a_bounds, raw_moment_table};
use stakelab_lab::checks::{CheckOptions, CriterionRegistry, DEFAULT_SEED};
use stakelab_lab::config::{ExperimentConfig, LimitsConfig, MomentsConfig};
use stakelab_lab::estimators::EstimatorRegistry;
use stakelab_lab::experiment::run_experiment;
use stakelab_lab::figures::FigureRegistry;
use stakelab_lab::output::{config_hash, write_json, Cell, Manifest, Table};

#[derive(Parser)]
#[command(
    name = "stakelab",
    version,
    about = "Stake-share urn experiments and acceptance checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replicate count (overrides the configuration).
    #[arg(long, global = true)]
    replicates: Option<u64>,
    /// Keep this fraction of N grids and replicate counts.
    #[arg(long, global = true)]
    scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment configuration over its N grid.
    Simulate,
    /// Exact moment table and a_t bounds for one configuration.
    Moments,
    /// Investor classification and limit statements over an N grid.
    Limits,
    /// Reproduce a figure as data files.
    Figure {
        name: Option<String>,
        /// List the available figures.
        #[arg(long)]
        list: bool,
    },
    /// Run an acceptance suite: oracle, bounds, limits, dilution or all.
    Check {
        #[arg(default_value = "all")]
        suite: String,
    },
}

fn read_config<T: DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    let path = path.context("--config is required for this command")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn out_dir(cli: &Cli, from_config: Option<&PathBuf>) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| from_config.cloned())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn apply_overrides(cli: &Cli, mut config: ExperimentConfig) -> Result<ExperimentConfig> {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r) = cli.replicates {
        config.replicates = r;
    }
    if let Some(f) = cli.scale {
        config = config.scaled(f)?;
    }
    Ok(config)
}

fn write_tables(tables: &[Table], dir: &Path, prefix: &str, manifest: &mut Manifest) -> Result<()> {
    for t in tables {
        let path = t.write(dir, prefix)?;
        println!("{}", path.display());
        manifest.record(&path);
    }
    Ok(())
}

fn finish(mut manifest: Manifest, start: Instant, dir: &Path, prefix: &str) -> Result<()> {
    manifest.runtime_seconds = start.elapsed().as_secs_f64();
    println!("{}", manifest.write(dir, prefix)?.display());
    Ok(())
}

fn simulate(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let config = apply_overrides(cli, read_config::<ExperimentConfig>(cli.config.as_deref())?)?;
    let dir = out_dir(cli, config.out.as_ref())?;
    let tables = run_experiment(&config, &EstimatorRegistry::builtin())?;
    let mut manifest = Manifest::new("simulate", &config.name, config_hash(&config)?, config.seed);
    write_tables(&tables, &dir, &config.name, &mut manifest)?;
    finish(manifest, start, &dir, &config.name)?;
    Ok(true)
}

fn moments_cmd(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let config: MomentsConfig = read_config(cli.config.as_deref())?;
    let dir = out_dir(cli, config.out.as_ref())?;
    let table = raw_moment_table(&config.schedule, config.n, config.pi0, config.horizon)?;
    let headers = [
        "t", "a", "m1", "m2", "m3", "m4", "mu2", "mu3", "mu4", "a_lower", "a_upper",
    ];
    let mut t = Table::new("moments", headers.map(String::from).to_vec());
    let stride = config.stride.max(1);
    for row in table
        .rows
        .iter()
        .filter(|r| r.t % stride == 0 || r.t == config.horizon)
    {
        let (lo, hi) = match row.t {
            0 => (None, None),
            time => {
                let b = a_bounds(&config.schedule, config.n, time)?;
                (b.lower, b.upper)
            }
        };
        let mut cells = vec![Cell::Int(row.t), row.a.into()];
        cells.extend(row.raw.iter().map(|&m| Cell::Float(m)));
        cells.extend([
            row.mu2.into(),
            row.mu3.into(),
            row.mu4.into(),
            Cell::opt(lo),
            Cell::opt(hi),
        ]);
        t.push(cells);
    }
    let mut manifest = Manifest::new("moments", &config.name, config_hash(&config)?, 0);
    write_tables(&[t], &dir, &config.name, &mut manifest)?;
    finish(manifest, start, &dir, &config.name)?;
    Ok(true)
}

fn limits_cmd(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let config: LimitsConfig = read_config(cli.config.as_deref())?;
    let dir = out_dir(cli, config.out.as_ref())?;
    let headers = [
        "N",
        "n0",
        "regime",
        "class",
        "threshold_exponent",
        "statement",
        "bound",
        "bound_order",
        "law",
        "law_mean",
        "limit_ratio",
        "limit_ratio_lower",
        "limit_class",
    ];
    let mut t = Table::new("limits", headers.map(String::from).to_vec());
    for &n in &config.n_grid {
        let c = classify_and_limit(&config.schedule, n, &config.initial, config.epsilon)?;
        let (statement, bound, order, law, mean) = match &c.statement {
            LimitStatement::Concentrates { bound, scale } => {
                ("concentrates", *bound, *scale, None, None)
            }
            LimitStatement::Law { law } => (
                "law",
                None,
                None,
                Some(serde_json::to_string(law)?),
                law.mean(),
            ),
            LimitStatement::AntiConcentration => ("anti_concentration", None, None, None, None),
            LimitStatement::VarianceDiverges => ("variance_diverges", None, None, None, None),
        };
        let mut row = vec![
            n.into(),
            config.initial.stake(n).into(),
            c.regime.name().into(),
            c.class
                .map_or(Cell::Empty, |k| Cell::Text(format!("{k:?}").to_lowercase())),
            Cell::opt(c.threshold_exponent),
            statement.into(),
            Cell::opt(bound),
            Cell::opt(order),
            law.map_or(Cell::Empty, Cell::Text),
            Cell::opt(mean),
        ];
        match config.theta {
            Some(theta) => {
                let r = expected_limit_ratio(&config.schedule, n, theta, config.horizon)?;
                row.extend([
                    r.value.into(),
                    r.lower.into(),
                    Cell::Text(format!("{:?}", r.classification).to_lowercase()),
                ]);
            }
            None => row.extend([Cell::Empty, Cell::Empty, Cell::Empty]),
        }
        t.push(row);
    }
    let mut manifest = Manifest::new("limits", &config.name, config_hash(&config)?, 0);
    write_tables(&[t], &dir, &config.name, &mut manifest)?;
    finish(manifest, start, &dir, &config.name)?;
    Ok(true)
}

fn figure(cli: &Cli, name: Option<&str>, list: bool) -> Result<bool> {
    let registry = FigureRegistry::builtin();
    if list {
        for f in registry.iter() {
            println!("{:<7} {}", f.name(), f.caption());
        }
        return Ok(true);
    }
    let Some(name) = name else {
        bail!("give a figure name or --list")
    };
    let start = Instant::now();
    let fig = registry.get(name)?;
    let panels = fig
        .panels()
        .into_iter()
        .map(|p| apply_overrides(cli, p))
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir(cli, None)?;
    let seed = panels[0].seed;
    let mut manifest = Manifest::new("figure", name, config_hash(&panels)?, seed);
    let estimators = EstimatorRegistry::builtin();
    for panel in &panels {
        let tables = run_experiment(panel, &estimators)?;
        write_tables(&tables, &dir, &panel.name, &mut manifest)?;
    }
    finish(manifest, start, &dir, name)?;
    Ok(true)
}

fn check(cli: &Cli, suite: &str) -> Result<bool> {
    let start = Instant::now();
    let opts = CheckOptions {
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        scale: cli.scale.unwrap_or(1.0),
        ..CheckOptions::default()
    };
    if !(opts.scale > 0.0 && opts.scale <= 1.0) {
        bail!("scale must lie in (0, 1], got {}", opts.scale);
    }
    if cli.replicates.is_some() {
        bail!("check uses fixed replicate counts; use --scale to shrink them");
    }
    let report = CriterionRegistry::builtin().run(suite, &opts)?;
    for c in &report.criteria {
        eprintln!("{}", c.summary());
    }
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let prefix = format!("check-{suite}");
            let path = dir.join(format!("{prefix}.json"));
            write_json(&path, &report)?;
            println!("{}", path.display());
            let hash = config_hash(&(suite, opts.seed, opts.scale))?;
            let mut manifest = Manifest::new("check", suite, hash, opts.seed);
            manifest.record(&path);
            finish(manifest, start, dir, &prefix)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(report.passed)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Moments => moments_cmd(cli),
        Command::Limits => limits_cmd(cli),
        Command::Figure { name, list } => figure(cli, name.as_deref(), *list),
        Command::Check { suite } => check(cli, suite),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(anyhow::anyhow!("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(|| run(&cli))),
        None => run(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
