//! Binary-level checks: exit codes, config-file/flag precedence, bench
//! reproducibility, and the budget-prefix property of first-cover times.

use huntfuzz_cli::campaign::{load_target, run_campaign};
use huntfuzz_cli::config::CampaignConfig;
use huntfuzz_core::fuzz::Budget;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_huntfuzz"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

#[test]
fn usage_error_exits_1() {
    let out = bin().args(["fuzz"]).output().unwrap(); // missing --target
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args([
            "fuzz",
            "--target",
            fixture("fig2.ir").to_str().unwrap(),
            "--budget",
            "nonsense",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_target_exits_2() {
    let out = bin()
        .args(["extract", "--target", "/nonexistent/x.ir"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let repro = dir.path().join("fake.repro");
    std::fs::write(&repro, "bug ghost\ninput 00\nerrseq 0\n").unwrap();
    let out = bin()
        .args([
            "fuzz",
            "--target",
            fixture("fig2.ir").to_str().unwrap(),
            "--replay",
            repro.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn budget_one_yields_one_row_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("camp");
    let out = bin()
        .args([
            "fuzz",
            "--target",
            fixture("switch3.ir").to_str().unwrap(),
            "--budget",
            "1execs",
            "--seed",
            "0",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("series.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "header plus exactly one sample row");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.conf");
    std::fs::write(&cfg, "k = 7\nmode = no-concolic\nbudget = 5execs\n").unwrap();
    let out_dir = dir.path().join("camp");
    // --budget overrides the file; mode/k come from the file.
    let out = bin()
        .args([
            "fuzz",
            "--target",
            fixture("switch3.ir").to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--budget",
            "10execs",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("10 executions"), "flag wins: {stdout}");
}

#[test]
fn cluster_command_emits_golden_json() {
    let out = bin()
        .args([
            "cluster",
            "--target",
            fixture("fig2.ir").to_str().unwrap(),
            "--k",
            "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["clusters"][0]["common_parent"], "B");
    assert_eq!(json["clusters"][0]["common_path"],
        serde_json::json!(["main", "A", "B"]));
}

/// Covered-point first-cover times do not increase with a larger budget:
/// execution-budget runs of the same seed share a deterministic prefix.
#[test]
fn first_cover_times_are_budget_prefix_stable() {
    let target = load_target(&fixture("switch3.ir"), 4).unwrap();
    let run = |budget: u64| {
        let config = CampaignConfig {
            budget: Budget::Executions(budget),
            rng_seed: 9,
            ..CampaignConfig::default()
        };
        run_campaign(&target, &config).unwrap().fuzz.first_fault_cover
    };
    let small = run(5_000);
    let large = run(20_000);
    for (label, t_small) in &small {
        let t_large = large
            .get(label)
            .expect("larger budget covers at least as much");
        assert!(t_large <= t_small, "{label}: {t_large} > {t_small}");
    }
    assert!(large.len() >= small.len());
}
