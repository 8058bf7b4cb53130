use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn fwl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fwl")).args(args).output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn simulate(out: &Path, threads: &str) -> Output {
    fwl(&[
        "simulate", "--beta", "0.5", "--seed", "7", "--horizon", "3", "--dt", "0.05", "--replicas", "40",
        "--record-at", "1,2,3", "--forest", "--threads", threads, "--out", out.to_str().unwrap(),
    ])
}

#[test]
fn same_config_gives_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(simulate(&a, "1").status.success());
    assert!(simulate(&b, "1").status.success());
    let ma = manifest(&a);
    assert_eq!(ma, manifest(&b));
    assert_eq!(ma["status"], "complete");
    assert_eq!(ma["files"].as_array().unwrap().len(), 3);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("one"), dir.path().join("eight"));
    assert!(simulate(&a, "1").status.success());
    assert!(simulate(&b, "8").status.success());
    assert_eq!(manifest(&a), manifest(&b));
    let s = |d: &Path, k: &str| {
        let a = d.to_str().unwrap();
        fwl(&["spine-sample", "--beta", "0.5", "--seed", "3", "--k", "3", "--t", "2", "--samples", "500", "--threads", k, "--out", a])
    };
    assert!(s(&dir.path().join("s1"), "1").status.success());
    assert!(s(&dir.path().join("s8"), "8").status.success());
    assert_eq!(manifest(&dir.path().join("s1")), manifest(&dir.path().join("s8")));
}

#[test]
fn csv_outputs_carry_schema_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    assert!(fwl(&["spectral", "--beta", "0.5", "--grid", "11", "--out", out.to_str().unwrap()]).status.success());
    let csv = std::fs::read_to_string(out.join("spectral_profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema=v1"));
    assert_eq!(lines.next(), Some("x,v1,h,h_tilde,Pi,Sigma_sq_cum"));
    assert_eq!(lines.count(), 11);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("spectral_summary.json")).unwrap()).unwrap();
    assert!((summary["Sigma_sq_L"].as_f64().unwrap() - 1.2380946).abs() < 1e-6);
    assert_eq!(manifest(&out)["schema"], "v1");
}

#[test]
fn stochastic_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = fwl(&["simulate", "--beta", "0.5", "--horizon", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing seed"));
    assert!(!out.exists());
}

#[test]
fn conflicting_model_block_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"beta": 0.5, "N": 10000, "c": 0.5}}"#).unwrap();
    let o = fwl(&["spectral", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("conflicting model block"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"L": 5.0}, "run": {"grid": 5}, "output": {"dir": "ignored"}}"#).unwrap();
    let out = dir.path().join("o");
    let o = fwl(&["spectral", "--config", cfg.to_str().unwrap(), "--grid", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["run"]["grid"], 7);
    assert_eq!(m["config"]["model"]["L"], 5.0);
}

#[test]
fn second_writer_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".fwl.lock"), "").unwrap();
    let o = fwl(&["spectral", "--beta", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("in use"));
}

#[test]
fn interrupted_run_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut child = Command::new(env!("CARGO_BIN_EXE_fwl"))
        .args([
            "simulate", "--beta", "0.5", "--seed", "1", "--horizon", "1000000", "--dt", "0.001", "--stable", "5000",
            "--threads", "1", "--out", out.to_str().unwrap(),
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    while !out.join("manifest.json").exists() {
        assert!(start.elapsed() < Duration::from_secs(30), "run never started");
        std::thread::sleep(Duration::from_millis(20));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(manifest(&out)["status"], "incomplete");
}

#[test]
fn verify_exit_code_reflects_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("i");
    let o = fwl(&["verify", "identities", "--beta", "0.5", "--out", out.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| !l.starts_with("FAIL")), "{text}");
    assert!(text.contains("PASS kernel.chapman_kolmogorov_rel"));
    let reports: Value = serde_json::from_str(&std::fs::read_to_string(out.join("reports.json")).unwrap()).unwrap();
    assert!(reports.as_array().unwrap().len() > 10);

    let out = dir.path().join("t");
    let o = fwl(&["verify", "trend", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL trend.sigma_ratio.N=1e16"));
}

#[test]
fn spine_quadrature_matches_known_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let o = fwl(&["spine-quadrature", "--beta", "0.5", "--k", "1", "--t", "2", "--x", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("spine_quadrature.json")).unwrap()).unwrap();
    assert!(v["value"].as_f64().unwrap() > 0.0);
    assert_eq!(v["k"], 1);
}
