//! Exit codes and argument handling of the `surgen` binary.

use std::path::Path;
use std::process::{Command, Output};

fn surgen(args: &[&str], out: &Path, data_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surgen"))
        .arg("--out")
        .arg(out)
        .arg("--data-root")
        .arg(data_root)
        .args(args)
        .env_remove("SURGEN_DATA_ROOT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn missing_data_root_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = surgen(&["build-data"], &dir.path().join("run"), &dir.path().join("nope"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}

#[test]
fn training_without_data_is_a_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&surgen(&["train", "vae"], &dir.path().join("run"), dir.path())), 3);
    assert_eq!(code(&surgen(&["train", "denoiser"], &dir.path().join("run"), dir.path())), 3);
    assert_eq!(code(&surgen(&["evaluate"], &dir.path().join("run"), dir.path())), 3);
}

#[test]
fn bad_prompt_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = surgen(&["sample", "--prompt", "appendectomy"], &dir.path().join("run"), dir.path());
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gallbladder dissection"));
}

#[test]
fn config_errors_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"sample": {"stepz": 3}}"#).unwrap();
    let o = surgen(&["--config", cfg.to_str().unwrap(), "config"], &dir.path().join("run"), dir.path());
    assert_eq!(code(&o), 4);
    assert_eq!(code(&surgen(&["frobnicate"], &dir.path().join("run"), dir.path())), 4);
}

#[test]
fn config_prints_the_resolved_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = surgen(&["--seed", "9", "config"], &dir.path().join("run"), dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["profile"], "toy");
    assert_eq!(v["data"]["length"], 17);
}
