//! Every acceptance criterion at its stated scale and tolerance, one line each.
//!
//! Lines go straight to stderr so they show even when the harness captures output.

use std::io::Write;
use std::path::Path;
use std::process::Command;

use stakelab_lab::checks::{CheckOptions, CriterionRegistry};

fn say(line: &str) {
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

#[test]
fn statistical_and_exact_criteria() {
    let report = CriterionRegistry::builtin()
        .run("all", &CheckOptions::default())
        .unwrap();
    say("");
    for c in &report.criteria {
        say(&c.summary());
        for m in c.measurements.iter().filter(|m| !m.passed) {
            if let Some(note) = &m.note {
                say(&format!("    {}: {note}", m.item));
            }
        }
    }
    let failed: Vec<u32> = report
        .criteria
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.id)
        .collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}

fn check_all(dir: &Path, threads: u32) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_stakelab"))
        .args([
            "check",
            "all",
            "--scale",
            "0.02",
            "--threads",
            &threads.to_string(),
            "--out",
        ])
        .arg(dir)
        .output()
        .unwrap();
    // Exit status 1 reports failed criteria; anything else is a crash.
    assert!(
        matches!(status.status.code(), Some(0 | 1)),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    std::fs::read(dir.join("check-all.json")).unwrap()
}

#[test]
fn reports_are_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<u8>> = [(1, "a"), (8, "b"), (1, "c"), (8, "d")]
        .iter()
        .map(|&(threads, sub)| check_all(&tmp.path().join(sub), threads))
        .collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    say("");
    say(&format!(
        "criterion 10 [repro] check all reports byte-identical at --threads 1 and 8 (4 runs, --scale 0.02): {}",
        if identical { "PASS" } else { "FAIL" }
    ));
    assert!(identical);
}
