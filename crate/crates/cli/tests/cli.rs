use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfconflict"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn missing_config_is_a_config_error() {
    assert_eq!(run(&["gen-train"]).status.code(), Some(2));
    assert_eq!(run(&["gen-train", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{ "model": { "kind": "poisson" } "#);
    let out = run(&["diagnose", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn gen_train_honours_seed_and_out_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{ "model": { "kind": "poisson", "n_obs": 5 }, "n_train": 300, "seed": 1 }"#);
    let out_dir = dir.path().join("a/b");
    let out = run(&["gen-train", "--config", &cfg, "--seed", "9", "--threads", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar = fs::read_to_string(out_dir.join("train.json")).unwrap();
    assert!(sidecar.contains("\"seed\": 9"), "{sidecar}");
}

#[test]
fn constant_series_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let obs = dir.path().join("flat.csv");
    fs::write(&obs, "4\n".repeat(20)).unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{
                "model": {{ "kind": "ricker", "series": {{ "t_len": 20, "n0": 1.0, "burn_in": 10 }}, "summary": {{ "kind": "raw-series" }} }},
                "n_train": 60,
                "seed": 1,
                "imputation": {{ "engine": "window" }},
                "window": {{ "regressor": "normal" }},
                "observed": {obs:?},
                "out": {out:?}
            }}"#,
            out = dir.path().join("out"),
        ),
    );
    let out = run(&["window-scan", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
