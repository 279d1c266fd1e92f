use std::path::Path;
use std::process::{Command, Output};

fn relaxctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxctl")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SCALAR: &str = r#"
  "system": {
    "a1": [[1.0]], "a2": [[-1.0]], "b1": [[0.5]], "b2": [[1.0]],
    "omega_a": {"lower": [-1], "upper": [1]},
    "omega_b": {"lower": [-1], "upper": [1]},
    "z0": [0.5], "y0": [0.8]
  }"#;

#[test]
fn models_list_names_every_model() {
    let out = relaxctl(&["models", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().any(|l| l.starts_with("granular\t")));
}

#[test]
fn simulate_and_reduce_write_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "toy.json", &format!(r#"{{"name": "toy", {SCALAR}, "epsilons": [0.01], "horizon": 0.5, "step": 0.01}}"#));
    let out = dir.path().to_str().unwrap();
    assert!(relaxctl(&["simulate", &cfg, "--out", out]).status.success());
    assert!(relaxctl(&["reduce", &cfg, "--out", out]).status.success());
    let stiff = std::fs::read_to_string(dir.path().join("toy_stiff.csv")).unwrap();
    let reduced = std::fs::read_to_string(dir.path().join("toy_reduced.csv")).unwrap();
    assert_eq!(stiff.lines().count(), 52);
    assert_eq!(reduced.lines().count(), 52);
    assert!(stiff.starts_with("time,z_0,y_0\n"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &format!(r#"{{"name": "bad", {SCALAR}, "epsilons": [0.1], "colour": 3}}"#));
    let out = relaxctl(&["sweep-trajectory", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ConfigError"));
    let out = relaxctl(&["cell", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"name": "big", {SCALAR}, "epsilons": [0.1],
            "cost": {{"terminal": {{"quadratic": [1.0]}}, "horizon": 0.5}},
            "grid": {{"slow": [{{"lower": -1, "upper": 1, "nodes": 21}}], "fast": [{{"lower": -1, "upper": 1, "nodes": 21}}]}}}}"#
    );
    let cfg = write(dir.path(), "big.json", &text);
    let out = relaxctl(&["sweep-value", &cfg, "--budget-nodes", "100", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("GridTooLarge"));
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sw.json", &format!(r#"{{"name": "sw", {SCALAR}, "epsilons": [0.1, 0.01], "horizon": 0.5, "step": 0.01}}"#));
    let out = dir.path().to_str().unwrap();
    let run = relaxctl(&["sweep-trajectory", &cfg, "--out", out, "--jobs", "2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let table = std::fs::read_to_string(dir.path().join("sw_trajectory.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let plots = tempfile::tempdir().unwrap();
    let run = relaxctl(&["plot", dir.path().join("sw_trajectory.csv").to_str().unwrap(), "--out", plots.path().to_str().unwrap()]);
    assert!(run.status.success());
    assert!(plots.path().join("sw_trajectory_mu.svg").exists());
    assert!(plots.path().join("sw_trajectory_ratio.svg").exists());
}
