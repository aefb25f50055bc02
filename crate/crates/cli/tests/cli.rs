//! End-to-end runs of the `thermal-rabi` binary: exit codes, file layout and
//! determinism across reruns and thread counts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::{json, Value};
use tempfile::TempDir;

use thermal_rabi::constants::hz_to_angular;
use thermal_rabi::dynamics::{build_rap_pulse, propagate, QubitAmplitudes};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermal-rabi"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows (after `#` metadata and the header) as parsed floats.
fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    entries.sort();
    entries
}

fn assert_same_outputs(a: &Path, b: &Path) {
    let (fa, fb) = (files_of(a), files_of(b));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
}

#[test]
fn missing_thermal_input_exits_2_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"schema_version": 1, "preset": "ca40_reference", "thermal": {}}));
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "dist"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("thermal"), "{}", stderr(&out));

    let cfg = write_config(dir.path(), "d.json", &json!({"schema_version": 1, "preset": "ca40_reference", "thermal": {"b": 7e-4, "temperature_mk": 1.0}}));
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "map"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("exactly one"));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"schema_version": 1, "preset": "ca40_reference", "omega_khz": 1.0}));
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "dist"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("omega_khz"));

    let cfg = write_config(dir.path(), "v.json", &json!({"schema_version": 9, "preset": "ca40_reference"}));
    assert_eq!(run(dir.path(), &["--config", cfg.to_str().unwrap(), "dist"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--config", "does-not-exist.json", "dist"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--threads", "0", "map"]).status.code(), Some(2));
}

#[test]
fn dist_reference_preset() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--out", "o", "dist"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let o = dir.path().join("o");
    let fit = read_json(&o.join("distribution_fit.json"));
    let b = fit["b"].as_f64().unwrap();
    assert!((b / 7.1e-4 - 1.0).abs() < 0.05, "b = {b}");
    assert_eq!(fit["metadata"]["config_sha256"].as_str().unwrap().len(), 64);
    for name in ["distribution_exact.csv", "distribution_smoothed.csv", "distribution_model.csv"] {
        let text = std::fs::read_to_string(o.join(name)).unwrap();
        assert!(text.starts_with("# tool: thermal-rabi "), "{name}");
        assert!(text.contains("# config_sha256: "));
        assert!(text.lines().any(|l| l == "omega_hz,probability" || l == "omega_hz,density_per_hz"));
    }
}

#[test]
fn outputs_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    for (threads, sub) in [("1", "a"), ("4", "b")] {
        let out = run(dir.path(), &["--threads", threads, "--out", sub, "dist"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let out = run(dir.path(), &["--threads", threads, "--out", sub, "map"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let out = run(dir.path(), &["--threads", threads, "--out", sub, "rap-scan", "--amplitudes-khz", "50,221", "--chirps-khz", "0,100"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_same_outputs(&dir.path().join("a"), &dir.path().join("b"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = TempDir::new().unwrap();
    for sub in ["a", "b"] {
        let out = run(dir.path(), &["--seed", "7", "--out", sub, "fit", "--synthetic"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_same_outputs(&dir.path().join("a"), &dir.path().join("b"));
    let out = run(dir.path(), &["--seed", "8", "--out", "c", "fit", "--synthetic"]);
    assert!(out.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a/trace.csv")).unwrap(),
        std::fs::read(dir.path().join("c/trace.csv")).unwrap()
    );
}

#[test]
fn rabi_reference_and_zero_duration() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--out", "o", "rabi"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = read_json(&dir.path().join("o/rabi_summary.json"));
    assert!(summary["max_abs_difference"].as_f64().unwrap() <= 0.02, "{summary}");
    let rows = csv_rows(&dir.path().join("o/rabi.csv"));
    assert_eq!(rows.len(), 501);
    assert!((rows[500][0] - 50.0).abs() < 1e-9);

    let out = run(dir.path(), &["--out", "z", "rabi", "--t-max-us", "0"]);
    assert!(out.status.success());
    assert_eq!(csv_rows(&dir.path().join("z/rabi.csv")), vec![vec![0.0, 0.0, 0.0]]);
}

#[test]
fn rap_scan_empty_amplitudes_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"schema_version": 1, "preset": "ca40_reference", "rap_scan": {"amplitudes_khz": [], "chirp_ranges_khz": [100.0]}}),
    );
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "rap-scan"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("amplitudes_khz"));
}

#[test]
fn rap_scan_point_mass_matches_single_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"schema_version": 1, "preset": "ca40_reference", "thermal": {"b": 0.0}}));
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", "o", "rap-scan", "--amplitudes-khz", "150", "--chirps-khz", "100"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("o/rap_scan_chirp_100khz.csv"));
    assert_eq!(rows.len(), 1);
    let pulse = build_rap_pulse(hz_to_angular(150e3), 50e-6, 100e3, 50).unwrap();
    let direct = propagate(&pulse, 1.0, 1.0, 0.0, QubitAmplitudes::ground()).p_excited();
    assert!((rows[0][1] - direct).abs() < 1e-12, "{} vs {direct}", rows[0][1]);
}

#[test]
fn fit_malformed_trace_names_line() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("t.csv"), "duration_us,p_excited\n1,0.1\n2,oops\n").unwrap();
    let out = run(dir.path(), &["fit", "t.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn fit_failure_exits_1() {
    let dir = TempDir::new().unwrap();
    let text: String = std::iter::once("duration_us,p_excited\n".to_owned())
        .chain((0..40).map(|i| format!("{},{}\n", i, f64::from(i) / 40.0)))
        .collect();
    std::fs::write(dir.path().join("t.csv"), text).unwrap();
    let out = run(dir.path(), &["fit", "t.csv"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn fit_noiseless_synthetic_recovers_b() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"schema_version": 1, "preset": "ca40_reference", "thermal": {"b": 7.1e-4}, "fit": {"synthetic": {"noiseless": true}}}),
    );
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", "o", "fit", "--synthetic"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let result = read_json(&dir.path().join("o/thermometry.json"));
    let b = result["b"].as_f64().unwrap();
    assert!((b / 7.1e-4 - 1.0).abs() < 0.01, "b = {b}");

    // the written trace reads back and fits to the same answer
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", "p", "fit", "o/trace.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let again = read_json(&dir.path().join("p/thermometry.json"));
    assert!((again["b"].as_f64().unwrap() / b - 1.0).abs() < 1e-6);
}

#[test]
fn map_smoke_and_rerun() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"schema_version": 1, "preset": ["ca40_reference", "rap_150khz"], "map": {"n_y": 2, "n_delta": 2}}),
    );
    let start = Instant::now();
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", "a", "map"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", "b", "map"]);
    assert!(out.status.success());
    assert_same_outputs(&dir.path().join("a"), &dir.path().join("b"));

    let text = std::fs::read_to_string(dir.path().join("a/map.csv")).unwrap();
    let table: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(table.len(), 4);
    assert!(table[0].starts_with("y\\delta_prime_hz,"));
    assert!(table[1].starts_with("y\\delta_prime_chirp_units,-1.5,1.5"));
    let meta = read_json(&dir.path().join("a/map.json"));
    assert_eq!(meta["pulse"]["chirp_range"].as_f64(), Some(150e3));
}

#[test]
fn calibrate_c_needs_five_temperatures() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"schema_version": 1, "preset": "ca40_reference", "calibrate": {"temperatures_over_td": [2.0]}}),
    );
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "calibrate-c"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn calibrate_c_reference_preset() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--out", "o", "calibrate-c"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cal = read_json(&dir.path().join("o/calibration.json"));
    let c = cal["c"].as_f64().unwrap();
    assert!((c / 4.0e6 - 1.0).abs() <= 0.1, "c = {c}");
    assert!(cal["r_squared"].as_f64().is_some());
    assert_eq!(cal["points"].as_array().unwrap().len(), 6);
}
