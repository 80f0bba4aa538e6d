use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use conformal_arbitrage::harness::{
    read_prices, read_trajectory, write_trajectory, RunConfig, RunSummary, Strategy,
};
use conformal_arbitrage::valuefn::read_curves;
use conformal_arbitrage::Error;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn cc_arb(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cc-arb"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = cc_arb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_risk_neutral_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = golden("run.toml");
    run_ok(&["--config", cfg.to_str().unwrap(), "--out", out, "simulate"]);
    assert_eq!(read(&dir.path().join("trajectory.csv")), read(&golden("trajectory_risk_neutral.csv")));
    assert_eq!(read(&dir.path().join("summary.json")), read(&golden("summary_risk_neutral.json")));
    assert_eq!(read(&dir.path().join("curves.csv")), read(&golden("curves.csv")));
    assert!(!dir.path().join("ledger.csv").exists());
}

#[test]
fn simulate_conformal_writes_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = golden("run.toml");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
        "--strategy",
        "conformal_prediction",
        "simulate",
    ]);
    assert_eq!(
        read(&dir.path().join("trajectory.csv")),
        read(&golden("trajectory_conformal_prediction.csv"))
    );
    assert_eq!(read(&dir.path().join("ledger.csv")), read(&golden("ledger_conformal_prediction.csv")));
}

#[test]
fn oracle_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("run.toml");
    run_ok(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "oracle"]);
    assert_eq!(read(&dir.path().join("oracle_trajectory.csv")), read(&golden("oracle_trajectory.csv")));
    let summary: RunSummary = serde_json::from_str(&read(&dir.path().join("oracle_summary.json"))).unwrap();
    assert_eq!(summary.profit, 40.0);
}

#[test]
fn gen_prices_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["--out", dir.path().to_str().unwrap(), "--seed", "3", "gen-prices", "--steps", "6"]);
    assert_eq!(read(&dir.path().join("prices.csv")), read(&golden("synthetic_prices_seed3.csv")));
}

#[test]
fn sweep_and_calibrate_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = golden("run.toml");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
        "--strategy",
        "conformal_value",
        "sweep",
        "--param",
        "controller.epsilon",
        "--values",
        "0.1,0.2",
    ]);
    let sweep = read(&dir.path().join("sweep.csv"));
    assert!(sweep.starts_with("param,value,metric,metric_value\n"));
    assert_eq!(sweep.lines().count(), 1 + 2 * 5);

    run_ok(&["--out", out, "calibrate-forecaster", "--target-r2", "0.4"]);
    let report: serde_json::Value = serde_json::from_str(&read(&dir.path().join("calibration.json"))).unwrap();
    let r2 = report["measured_r2"].as_f64().unwrap();
    assert!((r2 - 0.4).abs() <= 0.05, "{r2}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.toml");
    fs::write(&bad_cfg, "no_such_key = 1\n").unwrap();
    let out = cc_arb(&["--config", bad_cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(2));

    let bad_range = dir.path().join("range.toml");
    fs::write(&bad_range, "[controller]\nepsilon = 1.5\n").unwrap();
    assert_eq!(cc_arb(&["--config", bad_range.to_str().unwrap(), "simulate"]).status.code(), Some(2));

    let bad_prices = dir.path().join("p.csv");
    fs::write(&bad_prices, "timestamp,price\n2023-01-01T00:05:00,1\n2023-01-01T00:00:00,2\n").unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[prices]\npath = \"p.csv\"\n").unwrap();
    let out = cc_arb(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p.csv:3"));

    assert_eq!(Error::Numerical("identity".into()).exit_code(), 4);
}

#[test]
fn golden_files_parse_with_the_library() {
    let prices = read_prices(read(&golden("prices.csv")).as_bytes(), &golden("prices.csv"), false).unwrap();
    assert_eq!(prices.prices(), &[10.0, 50.0, 20.0, 60.0]);
    let records = read_trajectory(read(&golden("trajectory_conformal_prediction.csv")).as_bytes()).unwrap();
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &records).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), read(&golden("trajectory_conformal_prediction.csv")));
    let curves = read_curves(read(&golden("curves.csv")).as_bytes()).unwrap();
    assert_eq!(curves.len(), 4);
    let cfg = RunConfig::load(&golden("run.toml")).unwrap();
    assert_eq!(cfg.strategy, Strategy::RiskNeutral);
    assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
}
