use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_floquet-chern"));
    c.env_remove("FLOQUET_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const SWEEP_CONFIG: &str = "version = 1\nmethod = \"lattice_chern\"\ng = 0.5\n\n\
    [m1]\nmin = -4.0\nmax = 4.0\ncount = 4\n\n[m2]\nmin = -3.0\nmax = 3.0\ncount = 3\n\n[sim]\ngrid_n = 24\n";

fn write_config(dir: &Path) -> String {
    let path = dir.join("sweep.toml");
    std::fs::write(&path, SWEEP_CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

/// CSV body with the trailing wall_time column dropped.
fn strip_timing(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn chern_reports_occupied_number_and_region() {
    let out = run(&["chern", "--m1", "-1", "--m2", "-1", "--g", "0.5"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["occupied_chern"], -2);
    assert_eq!(v["region"], "R1");
    assert_eq!(v["classifier_chern"], -2);
}

#[test]
fn chern_gauge_check_is_seeded() {
    let a = run(&["chern", "--m1", "1", "--m2", "-6", "--seed", "11", "--gauge-check"]);
    let b = run(&["chern", "--m1", "1", "--m2", "-6", "--seed", "11", "--gauge-check"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["occupied_chern"], 1);
    assert_eq!(v["gauge_check"]["consistent"], true);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["chern", "--m1", "abc", "--m2", "0"]).status.code(), Some(1));
    assert_eq!(run(&["chern", "--m2", "0"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["sweep"]).status.code(), Some(1));
    assert_eq!(run(&["chern", "--m1", "0", "--m2", "0", "--grid", "4"]).status.code(), Some(1));
    assert_eq!(run(&["pump", "--m1", "0", "--m2", "0", "--dt", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failure_exits_with_two() {
    // Gapless point: the occupied Chern number is undefined.
    let out = run(&["chern", "--m1", "0", "--m2", "0", "--g", "0"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // Trace far shorter than three oscillation periods.
    let out = run(&["oscillate", "--m1", "1", "--m2", "1", "--total-time", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gap_and_bands_formats() {
    let out = run(&["gap", "--m1", "-2", "--m2", "1", "--g", "0", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("direct_gap,"));

    let dir = tempdir().unwrap();
    let out = run(&["bands", "--m1", "1", "--m2", "1", "--samples", "4", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let file = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    // Header plus 3 segments of 4 samples and the starting point.
    assert_eq!(file.lines().count(), 14);
    assert_eq!(file, String::from_utf8(out.stdout).unwrap());
}

#[test]
fn pump_reports_quantized_estimate() {
    let dir = tempdir().unwrap();
    let out = run(&[
        "pump", "--m1", "-1", "--m2", "-1", "--eta", "4", "--total-time", "5000", "--dt", "0.01",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["estimate"]["rounded"], -2);
    let trace = std::fs::read_to_string(dir.path().join("pump_trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t,E1_band1,E2_band1,E1_band2,E2_band2");
    assert_eq!(trace.lines().count(), 5001 + 1);
}

#[test]
fn floquet_spectrum_runs() {
    let out = run(&["floquet-spectrum", "--m1", "-1", "--m2", "-1", "--radius", "2"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["ladder"]["states"], 4 * 25);
}

#[test]
fn sweep_resumes_after_interrupt() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path());
    let interrupted = dir.path().join("a");
    let a = interrupted.to_str().unwrap();
    let out = run(&["sweep", "--config", &cfg, "--out", a, "--max-points", "5", "--workers", "2"]);
    assert!(out.status.success());
    let ckpt = std::fs::read_to_string(interrupted.join("sweep.ckpt")).unwrap();
    assert_eq!(ckpt.lines().count(), 1 + 5);

    let out = run(&["sweep", "--config", &cfg, "--out", a, "--workers", "2"]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("12 of 12"), "{stderr}");
    let ckpt = std::fs::read_to_string(interrupted.join("sweep.ckpt")).unwrap();
    assert_eq!(ckpt.lines().count(), 1 + 12);

    let fresh = dir.path().join("b");
    let out = run(&["sweep", "--config", &cfg, "--out", fresh.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success());
    let resumed = std::fs::read_to_string(interrupted.join("sweep.csv")).unwrap();
    let uninterrupted = std::fs::read_to_string(fresh.join("sweep.csv")).unwrap();
    assert_eq!(strip_timing(&resumed), strip_timing(&uninterrupted));
    assert!(fresh.join("sweep.json").exists());
    let matrix = std::fs::read_to_string(fresh.join("sweep_matrix_0.dat")).unwrap();
    assert_eq!(matrix.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);
}

#[test]
fn sweep_worker_env_and_stdout() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path());
    let one = bin().args(["sweep", "--config", &cfg]).env("FLOQUET_WORKERS", "1").output().unwrap();
    let three = bin().args(["sweep", "--config", &cfg]).env("FLOQUET_WORKERS", "3").output().unwrap();
    assert!(one.status.success() && three.status.success());
    let (one, three) = (String::from_utf8(one.stdout).unwrap(), String::from_utf8(three.stdout).unwrap());
    assert_eq!(one.lines().count(), 13);
    assert_eq!(strip_timing(&one), strip_timing(&three));
}
