use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ltde_core::io::check_manifest;

const TELEPORT: &str = r#"
[model]
n_agents = 4
actions = ["stay", "move"]
gamma = 0.5
r_max = 1.0
reward = { kind = "congestion" }
kernel = { kind = "teleport" }
"#;

fn ltde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltde"))
        .args(args)
        .env_remove("LTDE_OUT")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column_block(csv: &str, prefix: &str) -> Vec<Vec<String>> {
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let idx: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with(prefix)).collect();
    rows(csv).iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect()
}

#[test]
fn simulate_writes_coupled_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = ltde(&["simulate", "--seed", "3", "--out", path(dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let team = fs::read_to_string(a.join("team.csv")).unwrap();
    let agents = fs::read_to_string(a.join("agents.csv")).unwrap();
    assert_eq!(rows(&team).len(), 100);
    let mus = column_block(&team, "mu_");
    assert_eq!(mus[0], ["2", "1", "1"]);
    for mu in &mus {
        assert_eq!(mu.iter().map(|c| c.parse::<u32>().unwrap()).sum::<u32>(), 4);
    }
    assert_eq!(column_block(&agents, "mu_"), mus);
    // both runs are byte-identical, manifest included
    for name in ["team.csv", "agents.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest = check_manifest(&a).unwrap();
    assert_eq!(manifest.command, "simulate");
    assert!(manifest.files.contains_key("team.csv"));
    assert!(manifest.timings.is_none());
    assert!(!a.join(".ltde.lock").exists());
}

#[test]
fn different_seeds_differ() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(ltde(&["simulate", "--seed", "1", "--out", path(&a)]).status.success());
    assert!(ltde(&["simulate", "--seed", "2", "--out", path(&b)]).status.success());
    assert_ne!(fs::read(a.join("team.csv")).unwrap(), fs::read(b.join("team.csv")).unwrap());
}

#[test]
fn oracle_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("o");
    let out = ltde(&["oracle", "--out", path(&dir), "--timings"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let xi = fs::read_to_string(dir.join("xi.csv")).unwrap();
    assert_eq!(rows(&xi).len(), 126);
    assert_eq!(rows(&fs::read_to_string(dir.join("mu.csv")).unwrap()).len(), 15);
    let manifest = check_manifest(&dir).unwrap();
    assert_eq!(manifest.sizes["xi"], 126);
    assert!(manifest.timings.is_some());

    let export = ltde(&["export", path(&dir.join("mu.csv"))]);
    assert!(export.status.success());
    let text = String::from_utf8(export.stdout).unwrap();
    assert!(text.starts_with("# "));
    assert_eq!(text.lines().count(), 16);
    assert!(!text.lines().nth(1).unwrap().contains(','));
}

#[test]
fn short_training_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("t");
    let out = ltde(&[
        "train",
        "--out",
        path(&dir),
        "--set",
        "training.actor.iterations=2",
        "--set",
        "training.actor.critic.iterations=200",
        "--set",
        "training.actor.critic.width=8",
        "--set",
        "training.actor.batch=8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(dir.join("training.csv")).unwrap();
    assert_eq!(rows(&log).len(), 3);
    assert!(log.lines().next().unwrap().starts_with("iteration,j,j_exact"));
    let manifest = check_manifest(&dir).unwrap();
    for s in 0..3 {
        assert!(manifest.files.contains_key(&format!("theta_final_s{s}.bin")));
        assert!(manifest.files.contains_key(&format!("theta_best_s{s}.bin")));
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");

    fs::write(&cfg, "sede = 1").unwrap();
    let out = ltde(&["simulate", "--config", path(&cfg), "--out", path(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));

    fs::write(&cfg, TELEPORT).unwrap();
    let out = ltde(&["oracle", "--config", path(&cfg), "--out", path(&tmp.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = ltde(&["oracle", "--set", "oracle.xi_cap=100", "--out", path(&tmp.path().join("z"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("126"));

    // an invalid model still yields a report, with a single failing entry
    let dir = tmp.path().join("v");
    let out = ltde(&["verify", "--config", path(&cfg), "--out", path(&dir)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL  0 model validation"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert_eq!(report["criteria"][0]["id"], 0);
}

#[test]
fn verify_subset_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("v");
    let out = ltde(&["verify", "--only", "1,5", "--out", path(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS  1 lift round trip"));
    assert!(stdout.contains("PASS  5 exponential decay"));
    check_manifest(&dir).unwrap();
}

#[test]
fn locked_run_dir_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("l");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(".ltde.lock"), "").unwrap();
    let out = ltde(&["simulate", "--out", path(&dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn out_falls_back_to_env_root() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ltde"))
        .args(["simulate", "--set", "name=envrun", "--set", "simulate.steps=5"])
        .env("LTDE_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(rows(&fs::read_to_string(tmp.path().join("envrun/team.csv")).unwrap()).len(), 5);
}
