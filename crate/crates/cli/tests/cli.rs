use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn immreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_immreg")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn check_gauss_on_the_ellipsoid() {
    let out = immreg(&["check-gauss", "--shape", "ellipsoid:1,1.2,0.8", "--L", "32"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["schema"], "immreg/1");
    assert_eq!(v["command"], "check-gauss");
    assert!(v["data"]["max_discrepancy"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn index_of_the_unit_sphere_is_six() {
    let dir = tempfile::tempdir().unwrap();
    let out = immreg(&[
        "index", "--shape", "sphere:1", "--epsilon", "1", "--L", "8",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let unbased = &report["data"]["unbased"];
    assert_eq!(unbased["index"], 6);
    assert_eq!(unbased["kernel_dim"], 9);
    assert_eq!(unbased["cokernel_dim"], 3);
    assert_eq!(report["data"]["based"]["index"], 0);
}

#[test]
fn symbol_at_zero_is_characteristic() {
    let out = immreg(&["symbol", "--epsilon", "0", "--directions", "36", "--L", "6"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v["data"]["scan"]["max_singular_value_min"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["data"]["flag"], "characteristic in all sampled directions");
    let pos = stdout_json(&immreg(&["symbol", "--epsilon", "0.25", "--L", "6"]));
    assert_eq!(pos["data"]["elliptic"], true);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "L = 6\nshape = \"ellipsoid:1,1.1,0.9\"\nschedule = [1.0, 0.25]\n").unwrap();
    let out = immreg(&["kernel-sweep", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["data"]["L"], 6);
    assert_eq!(v["data"]["reports"].as_array().unwrap().len(), 2);
    let out = immreg(&["kernel-sweep", "--config", cfg.to_str().unwrap(), "--L", "4"]);
    assert_eq!(stdout_json(&out)["data"]["L"], 4);
}

#[test]
fn uniformize_writes_geometry_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = immreg(&[
        "uniformize", "--shape", "perturbed:1;2,0,0.1", "--L", "8",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("geometry.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "theta,phi,H,K,lambda2");
    assert_eq!(lines.count(), 9 * 18);
}

#[test]
fn solve_recovers_an_immersion_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = immreg(&[
        "solve", "--shape", "ellipsoid:1,1.05,0.95", "--L", "6", "--epsilon", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["data"]["procrustes"]["max_distance"].as_f64().unwrap() < 1e-6);
    // the written solution is a valid shape file
    let path = format!("file:{}", dir.path().join("solution.json").display());
    let again = immreg(&["check-gauss", "--shape", &path, "--L", "6", "--tol", "1"]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let out = immreg(&["index", "--shape", "cube:1", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let rec: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"], "parse");
    assert_eq!(rec["schema"], "immreg/1");
    assert!(dir.path().join("error.json").exists());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"L": 0, "coeffs": {"x": [1], "y": [0], "z": [0]}, "extra": true}"#).unwrap();
    let shape = format!("file:{}", bad.display());
    let out = immreg(&["check-gauss", "--shape", &shape, "--L", "4"]);
    assert!(!out.status.success());
    let rec: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"], "json");

    let out = immreg(&["index", "--shape", "sphere:1", "--L", "4", "--variant", "other"]);
    assert!(!out.status.success());
}

#[test]
fn continue_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "schedule = [1.0, 0.25, 0.05]\n").unwrap();
    let out = immreg(&[
        "continue", "--shape", "sphere:2", "--L", "4", "--tol", "1e-9",
        "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("epsilon,iters,residual,sv1,"));
    assert!(header.ends_with(",sv12"));
    assert_eq!(csv.lines().count(), 4);
}
