use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn agebranch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agebranch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn model_info_constant_preset() {
    let dir = TempDir::new().unwrap();
    let out = agebranch(dir.path(), &["model-info", "--preset", "constant b=0.4 m=2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_stdout(&out);
    assert!((v["lambda"].as_f64().unwrap() - 0.4).abs() < 1e-9);
    assert!((v["rho"].as_f64().unwrap() - 0.8).abs() < 1e-9);
    assert_eq!(v["regime"], "B+");
}

#[test]
fn model_info_trial_preset() {
    let dir = TempDir::new().unwrap();
    let out = agebranch(dir.path(), &["model-info", "--preset", "paper-trial"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_stdout(&out);
    assert!((v["lambda"].as_f64().unwrap() - 0.5173).abs() < 5e-4);
    for key in ["rho", "varpi", "kappa", "kappa_prime", "c_B"] {
        assert!(v[key].is_number(), "{key}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = agebranch(dir.path(), &["model-info", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "seed = [").unwrap();
    assert_eq!(agebranch(dir.path(), &["model-info", "--config", "bad.toml"]).status.code(), Some(2));
    fs::write(dir.path().join("odd.toml"), "colour = 3\n").unwrap();
    assert_eq!(agebranch(dir.path(), &["model-info", "--config", "odd.toml"]).status.code(), Some(2));
    assert_eq!(agebranch(dir.path(), &["model-info", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(agebranch(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(agebranch(dir.path(), &["simulate", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one_with_structured_stderr() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("cap.toml"), "[simulate]\nhorizon = 20.0\nnode_cap = 10\n").unwrap();
    let out = agebranch(dir.path(), &["simulate", "--config", "cap.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("population cap exceeded"));
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("sim.toml"), "seed = 5\n[simulate]\nhorizon = 9.0\n").unwrap();
    assert!(agebranch(d, &["simulate", "--config", "sim.toml", "--out", "a"]).status.success());
    assert!(agebranch(d, &["simulate", "--config", "a/effective_config.toml", "--out", "b"]).status.success());
    assert_eq!(fs::read(d.join("a/tree.csv")).unwrap(), fs::read(d.join("b/tree.csv")).unwrap());
    assert!(agebranch(d, &["simulate", "--config", "sim.toml", "--seed", "6", "--out", "c"]).status.success());
    assert_ne!(fs::read(d.join("a/tree.csv")).unwrap(), fs::read(d.join("c/tree.csv")).unwrap());
    let eff = fs::read_to_string(d.join("c/effective_config.toml")).unwrap();
    assert!(eff.starts_with("seed = 6"));
}

#[test]
fn estimate_from_a_dumped_tree() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert!(agebranch(d, &["simulate", "--out", "sim"]).status.success());
    fs::write(d.join("est.toml"), "[estimate]\ninput = \"sim/tree.csv\"\nhorizon = 13.0\n").unwrap();
    let out = agebranch(d, &["estimate", "--config", "est.toml", "--out", "est"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.join("est/estimate.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,B_hat,guard_flag"));
    assert_eq!(csv.lines().count(), 227);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("est/estimate.json")).unwrap()).unwrap();
    assert_eq!(meta["m_hat"], 2.0);
    assert!(d.join("est/boundary_density.csv").exists());
}

#[test]
fn verify_constant_preset_passes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("v.toml"), "[verify]\nhorizon = 4.0\nn_trees = 2000\nn_paths = 20000\n").unwrap();
    let out = agebranch(d, &["verify", "--preset", "constant b=0.4 m=2", "--config", "v.toml", "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/verify.json")).unwrap()).unwrap();
    let ids: Vec<&str> = reports.as_array().unwrap().iter().map(|r| r["identity"].as_str().unwrap()).collect();
    assert_eq!(ids, ["boundary", "interior", "forks", "lineage", "alive_forks"]);
    for r in reports.as_array().unwrap() {
        for key in ["T", "sizes", "lhs", "lhs_se", "rhs", "rhs_se", "z"] {
            assert!(r.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn verify_fails_loudly_on_an_impossible_tolerance() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("v.toml"),
        "[verify]\nhorizon = 4.0\nn_trees = 50\nn_paths = 500\nz_max = 0.0\nidentities = [\"interior\"]\n",
    )
    .unwrap();
    assert_eq!(agebranch(d, &["verify", "--config", "v.toml"]).status.code(), Some(1));
}

#[test]
fn tiny_experiment_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("x.toml"), "[experiment]\nhorizons = [5.0]\nreplicates = 1\n").unwrap();
    let out = agebranch(d, &["experiment", "--config", "x.toml"]);
    assert_eq!(out.status.code(), Some(0));
    let raw = fs::read_to_string(d.join("out/raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 2);
    for f in ["aggregate.csv", "summary.json", "rate.csv", "effective_config.toml"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn desk_experiment_shows_the_error_trend() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = agebranch(d, &["experiment", "--preset", "desk", "--out", "a"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    // Byte-identical reports on rerun.
    assert!(agebranch(d, &["experiment", "--config", "a/effective_config.toml", "--out", "b"]).status.success());
    for f in ["raw.csv", "aggregate.csv", "summary.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}
