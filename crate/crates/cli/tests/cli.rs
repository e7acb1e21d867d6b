// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use fbdicke_cli::{output::sha256_hex, recipes, ExperimentConfig};
use serde_json::Value;

const SMALL_SCAN: &str = r#"
kind = "gcrit-scan"
name = "small"
seed = 3

[params]
delta = 1.0
kappa = 1.0
g = 1.0

[kernel]
shape = "power-law"
s = 1.0
t0 = 1.0
h0 = 1.0

[grid]
theta = [0.0, 1.5707963267948966]
kappa = { lo = 0.1, hi = 10.0, n = 12, spacing = "log" }
"#;

const SMALL_TRAJECTORY: &str = r#"
kind = "trajectory"
name = "short"
seed = 1

[params]
delta = 2.0
kappa = 1.0
g = 0.3

[kernel]
shape = "power-law"
s = 2.0
t0 = 1.0
h0 = 2.0

[grid]
gain_ratio = [0.5]

[numerics.trajectory]
model = "spin"
t_end = 1.0
cavity_dim = 4
sample_every = 10
"#;

fn fbdicke(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbdicke"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn recipes_round_trip_through_toml() {
    for (name, cfg) in recipes::all() {
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg, "{name}");
        assert!(!cfg.criterion.is_empty(), "{name} names no criterion");
        assert_eq!(cfg.name, name);
    }
}

#[test]
fn list_and_validate_recipes() {
    let out = fbdicke(&["list-recipes"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in recipes::RECIPES {
        assert!(text.contains(name));
        assert!(fbdicke(&["validate", name]).status.success(), "{name}");
    }
}

#[test]
fn malformed_config_is_a_schema_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let bad = SMALL_SCAN.replace("seed = 3", "seed = 3\nbogus = 1");
    let path = write(tmp.path(), "bad.toml", &bad);
    let out = fbdicke(&["run", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert!(!out_dir.exists());

    let wrong_axis = SMALL_SCAN.replace("[grid]", "[grid]\nomega = [0.0, 1.0]");
    let path = write(tmp.path(), "axis.toml", &wrong_axis);
    assert_eq!(fbdicke(&["validate", &path]).status.code(), Some(2));
}

#[test]
fn missing_config_is_an_io_error() {
    assert_eq!(fbdicke(&["validate", "/nonexistent/config.toml"]).status.code(), Some(4));
}

#[test]
fn manifest_lists_every_artifact_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let path = write(tmp.path(), "scan.toml", SMALL_SCAN);
    let out = fbdicke(&["run", &path, "--out", out_dir.to_str().unwrap(), "--plot"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["kind"], "gcrit-scan");
    let artifacts = m["artifacts"].as_array().unwrap();
    let mut listed: Vec<String> = Vec::new();
    for a in artifacts {
        let file = a["file"].as_str().unwrap();
        let bytes = std::fs::read(out_dir.join(file)).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), sha256_hex(&bytes), "{file}");
        assert_eq!(a["bytes"].as_u64().unwrap() as usize, bytes.len());
        listed.push(file.to_string());
    }
    let mut on_disk: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|f| f != "manifest.json")
        .collect();
    on_disk.sort();
    listed.sort();
    assert_eq!(listed, on_disk);
    assert!(listed.iter().any(|f| f.ends_with(".svg")));
    let echo = ExperimentConfig::from_toml(m["config"].as_str().unwrap()).unwrap();
    assert_eq!(echo, ExperimentConfig::from_toml(SMALL_SCAN).unwrap());
}

#[test]
fn seed_override_is_recorded_and_used() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "traj.toml", SMALL_TRAJECTORY);
    let run = |seed: &str, dir: &str| {
        let d = tmp.path().join(dir);
        let out = fbdicke(&["run", &path, "--seed", seed, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        d
    };
    let a = run("1", "a");
    let b = run("42", "b");
    let c = run("42", "c");
    assert_eq!(manifest(&b)["seed"], 42);
    let echo = ExperimentConfig::from_toml(manifest(&b)["config"].as_str().unwrap()).unwrap();
    assert_eq!(echo.seed, 42);
    let read = |d: &Path| std::fs::read_to_string(d.join("trajectory_0.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
    assert_eq!(read(&b), read(&c));
}

#[test]
fn failed_points_leave_a_partial_run() {
    // C_theta vanishes at theta = 3 pi / 4 when kappa = delta, so that point
    // has no threshold.
    let cfg = SMALL_SCAN
        .replace("theta = [0.0, 1.5707963267948966]", "theta = [1.5707963267948966, 2.356194490192345]")
        .replace("kappa = { lo = 0.1, hi = 10.0, n = 12, spacing = \"log\" }", "kappa = [1.0]");
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let path = write(tmp.path(), "partial.toml", &cfg);
    let out = fbdicke(&["run", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["status"], "partial");
    let points = m["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0]["status"], "ok");
    assert_eq!(points[1]["status"], "failed");
    assert!(out_dir.join("gcrit.csv").exists());
}
