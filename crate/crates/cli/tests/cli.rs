//! End-to-end runs of the `cbm` binary on small sample counts.

use std::path::Path;
use std::process::{Command, Output};

fn cbm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbm"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn optimize_writes_matrices_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&cbm(dir.path(), &["--samples", "2000", "optimize", "--grid-T", "5:15:3", "--grid-M", "10,14,18"]));
    assert!(stdout.contains("asymptotic: T ="));
    assert!(stdout.contains("transient: T ="));
    let csv = std::fs::read_to_string(dir.path().join("asymptotic.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "T,M,value,stderr");
    assert_eq!(lines.len(), 1 + 9);
    let r = report(dir.path());
    assert_eq!(r["command"], "optimize");
    assert!(r["results"]["transient"]["rate"].as_f64().unwrap() > 0.0);
    assert_eq!(r["config"]["simulation"]["samples"], 2000);
}

#[test]
fn single_objective_and_same_seed_reproduce() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--samples", "1500", "--seed", "5", "optimize", "--objective", "transient", "--grid-T", "10", "--grid-M", "12,14"];
    ok(&cbm(a.path(), &args));
    ok(&cbm(b.path(), &["--workers", "2"].iter().chain(&args).copied().collect::<Vec<_>>()));
    assert!(!a.path().join("asymptotic.csv").exists());
    assert_eq!(
        std::fs::read(a.path().join("transient.csv")).unwrap(),
        std::fs::read(b.path().join("transient.csv")).unwrap()
    );
}

#[test]
fn curves_with_sweep_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cache_arg = cache.to_str().unwrap();
    let args = ["--samples", "1500", "curves", "-T", "10", "-M", "14", "--sweep", "--strict-mc", "--cache-dir", cache_arg];
    let stdout = ok(&cbm(dir.path(), &args));
    assert!(stdout.contains("E[C(50)]/50"));
    for f in ["cost.csv", "availability.csv", "reliability.csv", "interval_reliability.csv", "sweep.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cost = std::fs::read_to_string(dir.path().join("cost.csv")).unwrap();
    assert!(cost.starts_with("t,mean,second_moment,stddev,rate\n"));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("M,recursive,stderr,strict,strict_stderr\n"));
    assert_eq!(sweep.lines().count(), 31);
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);

    // a second run reads the cached tables and reports the same curve
    let again = tempfile::tempdir().unwrap();
    ok(&cbm(again.path(), &["--samples", "1500", "curves", "-T", "10", "-M", "14", "--cache-dir", cache_arg]));
    assert_eq!(cost, std::fs::read_to_string(again.path().join("cost.csv")).unwrap());
}

#[test]
fn sensitivity_table_has_zero_centre() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cbm(
        dir.path(),
        &["--samples", "800", "--quiet", "sensitivity", "--target", "shocks", "--fixed", "T=10", "--variations", "-5,0,5"],
    ));
    let csv = std::fs::read_to_string(dir.path().join("sensitivity_shocks.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "row\\col,-5%,0%,5%");
    assert_eq!(lines[2].split(',').nth(2), Some("0.0000"));
}

#[test]
fn show_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let printed = ok(&cbm(dir.path(), &["--samples", "123", "show-config"]));
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, &printed).unwrap();
    let again = ok(&cbm(dir.path(), &["--config", path.to_str().unwrap(), "show-config"]));
    assert_eq!(printed, again);
    assert!(printed.contains("samples = 123"));
}

#[test]
fn shipped_reference_config_loads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/reference.cfg");
    let stdout = ok(&cbm(dir.path(), &["--config", cfg, "--samples", "3000", "failure-law"]));
    assert!(stdout.contains("E[sigma_L]"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/reference.cfg")).unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, cfg.replace("preventive = 150.0", "preventive = 400.0")).unwrap();
    let o = cbm(dir.path(), &["--config", path.to_str().unwrap(), "failure-law"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("costs."), "{err}");

    std::fs::write(&path, cfg.replace("schema = 1", "schema = 7")).unwrap();
    let o = cbm(dir.path(), &["--config", path.to_str().unwrap(), "failure-law"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!cbm(dir.path(), &["optimize", "--grid-T", "5:10"]).status.success());
    assert!(!cbm(dir.path(), &["optimize", "--grid-M", "10,40"]).status.success());
    assert!(!cbm(dir.path(), &["sensitivity", "--target", "gamma", "--fixed", "X=3"]).status.success());
    assert!(!cbm(dir.path(), &["--samples", "0", "failure-law"]).status.success());
}
