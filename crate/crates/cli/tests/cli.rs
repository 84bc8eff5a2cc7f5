use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").canonicalize().unwrap()
}

/// The toy configuration with data paths made absolute and `edit` applied to the text.
fn toy_config(dir: &Path, edit: impl FnOnce(String) -> String) -> PathBuf {
    let data = data_dir();
    let text = fs::read_to_string(data.join("toy.toml")).unwrap();
    let text = text
        .replace("\"density_v1.toml\"", &format!("{:?}", data.join("density_v1.toml")))
        .replace("\"flux_low.csv\"", &format!("{:?}", data.join("flux_low.csv")))
        .replace("\"flux_medium.csv\"", &format!("{:?}", data.join("flux_medium.csv")))
        .replace("\"flux_high.csv\"", &format!("{:?}", data.join("flux_high.csv")));
    let path = dir.join("toy.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

fn mission(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mission"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status, String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn sha(p: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(p).unwrap()))
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn build_reports_the_toy_state_count_and_exports_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let stdout = ok(&mission(&["build"], &cfg, &a));
    assert!(stdout.contains("states 17"), "{stdout}");
    ok(&mission(&["build"], &cfg, &b));
    assert_eq!(sha(&a.join("model.mdp")), sha(&b.join("model.mdp")));
    let manifest = json(&a.join("build.manifest.json"));
    assert_eq!(manifest["statistics"]["model"]["states"], 17);
    assert!(manifest["timings"].as_array().unwrap().iter().any(|t| t["phase"] == "build"));
}

#[test]
fn simulate_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t);
    let out = dir.path().join("out");
    ok(&mission(&["solve"], &cfg, &out));
    ok(&mission(&["simulate", "--seed", "7"], &cfg, &out));
    let first = sha(&out.join("simulation_envelope.csv"));
    let summary = fs::read(out.join("simulation.json")).unwrap();
    ok(&mission(&["simulate", "--seed", "7"], &cfg, &out));
    assert_eq!(first, sha(&out.join("simulation_envelope.csv")));
    assert_eq!(summary, fs::read(out.join("simulation.json")).unwrap());
}

#[test]
fn unreachable_floor_leaves_the_full_margin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t);
    let out = dir.path().join("out");
    ok(&mission(&["solve"], &cfg, &out));
    ok(&mission(&["verify"], &cfg, &out));
    let v = json(&out.join("verification.json"));
    assert_eq!(v["safety_probability"], 1.0);
    assert!((v["margin"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert_eq!(v["unsafe_states"], 1);
    assert!(v["trace"].is_null());
    for f in ["violation_curve.csv", "final_altitude.csv", "envelope.csv", "verify.manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn infeasible_policy_exits_3_with_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    // the whole grid below the start band is unsafe and no slack is allowed
    let cfg = toy_config(dir.path(), |t| t.replace("altitude_floor_km = 300.0", "altitude_floor_km = 450.0").replace("delta = 0.05", "delta = 0.0"));
    let out = dir.path().join("out");
    ok(&mission(&["solve"], &cfg, &out));
    let o = mission(&["verify"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out.join("verification.json"));
    assert_eq!(v["feasible"], false);
    let trace = v["trace"].as_array().expect("trace");
    assert!(!trace.is_empty());
    assert!(trace.last().unwrap()["safety"].as_f64().unwrap() == 0.0);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t.replace("[grid]", "[grid]\nbogus_setting = 1"));
    let o = mission(&["build"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_setting"));
}

#[test]
fn missing_policy_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t);
    let o = mission(&["verify"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("policy.bin") && err.contains("missing"), "{err}");
}

#[test]
fn policy_from_another_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t);
    let out = dir.path().join("out");
    ok(&mission(&["solve", "--mode", "det"], &cfg, &out));
    let o = mission(&["verify", "--mode", "stoch"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rerun solve"));
    ok(&mission(&["verify", "--mode", "det"], &cfg, &out));
}

#[test]
fn resonances_table_lists_the_grid_band() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t);
    let out = dir.path().join("out");
    ok(&mission(&["resonances"], &cfg, &out));
    let text = fs::read_to_string(out.join("resonances.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("altitude_km,D,N,res"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        let alt: f64 = r[0].parse().unwrap();
        let n: u32 = r[2].parse().unwrap();
        assert!((300.0..=500.0).contains(&alt) && (1..=5).contains(&n), "{r:?}");
        assert_eq!(r[3].parse::<f64>().unwrap(), 1.0 / n as f64);
    }
}

#[test]
fn replan_reports_from_the_supplied_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), |t| t);
    let out = dir.path().join("out");
    ok(&mission(&["solve"], &cfg, &out));
    let stdout = ok(&mission(&["replan", "--from-state", "420,2.5,1,2018-08-01"], &cfg, &out));
    assert!(stdout.contains("step 3"), "{stdout}");
    let r = json(&out.join("replan.json"));
    assert_eq!(r["step"], 3);
    assert_eq!(r["state"]["alt_bin"], 2);
    let envelope = fs::read_to_string(out.join("replan_envelope.csv")).unwrap();
    // steps 3..=6 plus the header
    assert_eq!(envelope.lines().count(), 5);
    let bad = mission(&["replan", "--from-state", "420,2.5"], &cfg, &out);
    assert_eq!(bad.status.code(), Some(2));
}
