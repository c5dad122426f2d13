use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stakelab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stakelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_experiment() -> serde_json::Value {
    serde_json::json!({
        "name": "small",
        "schedule": {"kind": "power_decay", "c": 1.0, "alpha": 0.6},
        "n_grid": [50.0, 100.0],
        "initial": {"rule": "fraction", "p": 0.5},
        "horizon": 2000,
        "replicates": 300,
        "stride": 500,
        "estimators": ["p_max", "variance", "deviation", "tail", "histogram", "ks"],
        "seed": 7
    })
}

#[test]
fn simulate_writes_tables_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", small_experiment());
    let out = tmp.path().join("out");
    let r = stakelab(&["simulate", "--config", &cfg], &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let estimates = fs::read_to_string(out.join("small.estimates.csv")).unwrap();
    let mut lines = estimates.split("\r\n");
    let header = lines.next().unwrap();
    assert!(header.starts_with("N,n0,p_max,p_max_se,p_max_time,bound,bound_order,mean_ratio"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "5.0000000000000000e1");
    // 17 significant digits: one before the point and sixteen after.
    assert_eq!(first[0].split('e').next().unwrap().len(), 18);

    let series = fs::read_to_string(out.join("small.series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 2 * 5);
    let hist = fs::read_to_string(out.join("small.histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 2 * 50);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("small.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["runtime_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
}

#[test]
fn output_bytes_do_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", small_experiment());
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let r = stakelab(&["simulate", "--config", &cfg, "--threads", threads], &out);
        assert!(r.status.success());
        csvs.push((
            fs::read(out.join("small.estimates.csv")).unwrap(),
            fs::read(out.join("small.series.csv")).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn config_hash_follows_semantic_fields_only() {
    let tmp = tempfile::tempdir().unwrap();
    let hash = |value: serde_json::Value, tag: &str| {
        let cfg = write_config(tmp.path(), &format!("{tag}.json"), value);
        let out = tmp.path().join(tag);
        let r = stakelab(&["simulate", "--config", &cfg, "--replicates", "20"], &out);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("small.manifest.json")).unwrap())
                .unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    let base = hash(small_experiment(), "a");
    assert_eq!(base, hash(small_experiment(), "b"));
    let mut moved = small_experiment();
    moved["out"] = "elsewhere".into();
    assert_eq!(base, hash(moved, "c"));
    let mut changed = small_experiment();
    changed["horizon"] = 1999.into();
    assert_ne!(base, hash(changed, "d"));
}

#[test]
fn bound_column_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "name": "bound",
        "schedule": {"kind": "constant", "reward": 1.0},
        "n_grid": [1000.0, 10000.0],
        "initial": {"rule": "fraction", "p": 0.5},
        "horizon": 10, "replicates": 5, "estimators": ["p_max"]
    });
    let path = write_config(tmp.path(), "b.json", cfg);
    let out = tmp.path().join("o");
    assert!(stakelab(&["simulate", "--config", &path], &out)
        .status
        .success());
    let text = fs::read_to_string(out.join("bound.estimates.csv")).unwrap();
    let bounds: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    let s = stakelab::RewardSchedule::constant(1.0);
    assert_eq!(
        bounds[0],
        stakelab::moments::concentration_bound(&s, 1000.0, 500.0, 0.05).unwrap()
    );
    assert!((bounds[0] - 1.0).abs() < 1e-12 && (bounds[1] - 0.1).abs() < 1e-12);
}

#[test]
fn moments_and_limits_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_config(
        tmp.path(),
        "m.json",
        serde_json::json!({"schedule": {"kind": "constant", "reward": 1.0}, "n": 100.0, "pi0": 0.5, "horizon": 100, "stride": 10}),
    );
    let out = tmp.path().join("o");
    assert!(stakelab(&["moments", "--config", &m], &out)
        .status
        .success());
    let text = fs::read_to_string(out.join("moments.moments.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 11);

    let l = write_config(
        tmp.path(),
        "l.json",
        serde_json::json!({
            "schedule": {"kind": "constant", "reward": 1.0},
            "n_grid": [100.0, 1000.0],
            "initial": {"rule": "constant", "c": 1.0},
            "theta": 1.0,
            "horizon": 1000
        }),
    );
    assert!(stakelab(&["limits", "--config", &l], &out).status.success());
    let text = fs::read_to_string(out.join("limits.limits.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "constant");
    assert_eq!(row[3], "medium");
    assert_eq!(row[5], "law");
}

#[test]
fn figures_are_listed_and_unknown_names_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let r = stakelab(&["figure", "--list"], tmp.path());
    assert!(r.status.success());
    assert_eq!(String::from_utf8(r.stdout).unwrap().lines().count(), 16);
    let r = stakelab(&["figure", "fig99"], tmp.path());
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown figure"));
}

#[test]
fn scaled_figure_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f");
    let r = stakelab(
        &["figure", "fig9", "--replicates", "200", "--seed", "3"],
        &out,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(out.join("fig9_half.histogram.csv")).unwrap();
    let masses: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((masses - 1.0).abs() < 1e-12);
    let r = stakelab(
        &["figure", "fig1", "--scale", "0.1", "--replicates", "10"],
        &out,
    );
    assert!(r.status.success());
    let text = fs::read_to_string(out.join("fig1.estimates.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2);
}

#[test]
fn oracle_check_passes_and_bad_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let r = stakelab(&["check", "oracle"], tmp.path());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("check-oracle.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["criteria"].as_array().unwrap().len(), 2);

    let r = stakelab(&["check", "nonsense"], tmp.path());
    assert_eq!(r.status.code(), Some(2));
    let bad = write_config(
        tmp.path(),
        "bad.json",
        serde_json::json!({"schedule": {"kind": "constant", "reward": -1.0}}),
    );
    let r = stakelab(&["simulate", "--config", &bad], tmp.path());
    assert_eq!(r.status.code(), Some(2));
}
