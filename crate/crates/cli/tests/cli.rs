use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdoa-track")).args(args).output().unwrap()
}

fn scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("s.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"
[scenario]
sensors = 6
steps = 40
trials = 2
seed = 3

[topology]
kind = "kappa"
kappa = 1
"#;

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&["simulate", "-c", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mse.csv", "trajectory.csv", "positions.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn check_network_and_design_gain_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let o = run(&["check-network", "-c", &cfg]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("strongly connected true"));
    let out = dir.path().join("gains");
    let o = run(&["design-gain", "-c", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("gains-linear.csv").exists());
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!run(&["simulate"]).status.success());
    let cfg = scenario(dir.path(), "[scenario]\nsensors = \"ten\"\n");
    let o = run(&["simulate", "-c", &cfg]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
