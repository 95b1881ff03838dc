use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ventzell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ventzell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn verdict(dir: &Path) -> Value {
    let entry = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_str().unwrap().ends_with("_verdict.json"))
        .expect("a verdict file");
    serde_json::from_slice(&std::fs::read(entry).unwrap()).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL: &str = "paths = 40\nepsilons = [0.125, 0.0625, 0.03125]\n[grid]\nn_steps = 1024\n";

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "kind = \"covariation\"\nepsilon = [0.1]\n");
    let out = ventzell(&[&cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
    assert!(!tmp.path().join("o").exists(), "nothing is written for invalid configs");
}

#[test]
fn invalid_field_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "kind = \"zero-energy\"\nflow = \"nope\"\n");
    let out = ventzell(&[&cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flow: "));
    let out = ventzell(&[tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn frozen_corollary_passes_with_zero_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("kind = \"corollary\"\nflow = \"frozen\"\n{SMALL}"));
    let out_dir = tmp.path().join("o");
    let out = ventzell(&[&cfg, "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = verdict(&out_dir);
    assert_eq!(v["pass"], true);
    assert_eq!(v["summary"]["worst"]["sup_residual"], 0.0);
    assert_eq!(v["summary"]["failing_paths"], 0);
}

#[test]
fn covariation_writes_one_value_per_path_and_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("kind = \"covariation\"\n{SMALL}"));
    let out_dir = tmp.path().join("o");
    let out = ventzell(&[&cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(0 | 1)));
    let csv = std::fs::read_to_string(out_dir.join("covariation_x_s0_dt2m10_values.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 40 * 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,1.2500000000000000e-1,"));
    let v = verdict(&out_dir);
    assert_eq!(v["summary"]["target"], "T");
}

#[test]
fn manifest_lists_exactly_the_emitted_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        &format!("kind = \"zero-energy\"\nflow = \"square\"\ncsv_paths = 2\n{SMALL}"),
    );
    let out_dir = tmp.path().join("o");
    ventzell(&[&cfg, "--out", out_dir.to_str().unwrap(), "--seed", "5"]);
    let m = manifest(&out_dir);
    let mut listed: Vec<String> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap().to_string())
        .collect();
    for f in m["files"].as_array().unwrap() {
        let bytes = std::fs::read(out_dir.join(f["file"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"], ventzell_cli::manifest::sha256_hex(&bytes));
    }
    listed.push("manifest.json".into());
    listed.sort();
    let mut present: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    present.sort();
    assert_eq!(listed, present);
    assert!(present.iter().all(|f| f == "manifest.json" || f.starts_with("zero-energy_square_s5_dt2m10_")));

    // A different seed in the same directory replaces the old files.
    ventzell(&[&cfg, "--out", out_dir.to_str().unwrap(), "--seed", "6"]);
    let m2 = manifest(&out_dir);
    assert_ne!(m["config_sha256"], m2["config_sha256"]);
    assert!(std::fs::read_dir(&out_dir)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_str().unwrap().contains("_s5_")));
}

#[test]
fn rerun_reproduces_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("kind = \"ventzell-verify\"\nflow = \"square\"\n{SMALL}"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ventzell(&[&cfg, "--out", a.to_str().unwrap(), "--threads", "1"]);
    ventzell(&[&cfg, "--out", b.to_str().unwrap(), "--threads", "4"]);
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn blow_up_is_a_runtime_error_naming_path_and_node() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        &format!("kind = \"covariation\"\n{SMALL}[process]\nmartingale = \"1e200 * exp(x^2)\"\n"),
    );
    let out = ventzell(&[&cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("covariation") && err.contains("path 0") && err.contains("node"), "{err}");
}
