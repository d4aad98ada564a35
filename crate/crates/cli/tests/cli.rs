use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const SIMULATE: &str = "\
output = sim
[shape]
kind = circle
radius = 0.4
[grid]
points = 64
[ac]
epsilon = 0.2
t_end = 0.004
snapshots = 0.002, 0.004
";

fn fattenlab(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fattenlab"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .args(extra)
        .env("FATTENLAB_OUT", dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn simulate_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fattenlab(tmp.path(), "simulate", SIMULATE, &["--strict"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = tmp.path().join("out/sim");
    let manifest = fs::read_to_string(root.join("manifest.txt")).unwrap();
    let hash = hex::encode(Sha256::digest(SIMULATE.as_bytes()));
    assert!(manifest.contains(&format!("config_sha256 = {hash}")));
    assert!(manifest.contains("command = simulate"));
    assert!(manifest.contains("eps_0.2/manifest.txt"));
    let sub = fs::read_to_string(root.join("eps_0.2/manifest.txt")).unwrap();
    for line in sub.lines().skip_while(|l| *l != "[files]").skip(1) {
        assert!(root.join("eps_0.2").join(line).exists(), "{line} listed but missing");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("artifacts in"));
}

#[test]
fn invalid_config_leaves_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SIMULATE.replace("epsilon = 0.2", "epsilon = 1.5");
    let out = fattenlab(tmp.path(), "simulate", &bad, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 8"));
    assert!(!tmp.path().join("out").exists());

    // resolution guard: eps below 4h
    let coarse = SIMULATE.replace("epsilon = 0.2", "epsilon = 0.05");
    assert_eq!(fattenlab(tmp.path(), "simulate", &coarse, &[]).status.code(), Some(1));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn bad_arguments_are_invalid() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(fattenlab(tmp.path(), "bogus", SIMULATE, &[]).status.code(), Some(1));
    assert_eq!(fattenlab(tmp.path(), "simulate", SIMULATE, &["--threads", "0"]).status.code(), Some(1));
    let missing = Command::new(env!("CARGO_BIN_EXE_fattenlab"))
        .args(["simulate", "--config"])
        .arg(tmp.path().join("nope.cfg"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn strict_turns_violations_into_exit_three() {
    // the caloric residual of the heat-flowed distance is too coarse at 128²
    let cfg = "\
output = ver
[shape]
kind = circle
radius = 0.4
[grid]
points = 128
[ac]
epsilon = 0.1
t_end = 0.01
snapshots = 0.01
[verify]
dtilde_times = 0.001
";
    let tmp = tempfile::tempdir().unwrap();
    let lax = fattenlab(tmp.path(), "verify", cfg, &[]);
    assert_eq!(lax.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&lax.stdout);
    assert!(stdout.contains("VIOLATION"), "{stdout}");
    let strict = fattenlab(tmp.path(), "verify", cfg, &["--strict"]);
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn runs_are_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    fattenlab(a.path(), "simulate", SIMULATE, &["--threads", "1"]);
    fattenlab(b.path(), "simulate", SIMULATE, &["--threads", "3"]);
    let files = ["manifest.txt", "eps_0.2/u_001.f64", "eps_0.2/bounds.tsv", "eps_0.2/manifest.txt"];
    for f in files {
        let x = fs::read(a.path().join("out/sim").join(f)).unwrap();
        let y = fs::read(b.path().join("out/sim").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}
