//! Integration tests of the binary: exit codes, round trips, defaults.

use std::path::{Path, PathBuf};
use std::process::Command;

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_pdblock")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pdblock-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) -> String {
    let out = Command::new(exe()).args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_then_run_loaded_problem() {
    let dir = tmp_dir("genrun");
    let prob = dir.join("prob.json");
    let trace = dir.join("trace.csv");
    run_ok(&[
        "gen", "--qp", "--n", "12", "--p", "2", "--blocks", "3", "--seed", "5", "--out",
        prob.to_str().unwrap(),
    ]);
    run_ok(&[
        "run",
        "--algo",
        "jacobi",
        "--problem",
        prob.to_str().unwrap(),
        "--iters",
        "50",
        "--ref-iters",
        "50000",
        "--out",
        trace.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("k,obj_gap,feas,dist_sq\n"));
    // sidecar metadata and cached reference sit beside the trace
    assert!(dir.join("trace.csv.meta.json").exists());
    assert!(dir.join("trace.csv.ref.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn json_trace_round_trips_exactly() {
    let dir = tmp_dir("json");
    let trace = dir.join("trace.json");
    run_ok(&[
        "run", "--algo", "rpdc-adaptive", "--qp", "--n", "12", "--p", "2", "--blocks", "3",
        "--rho", "1", "--iters", "40", "--seed", "2", "--format", "json", "--ref-iters",
        "50000", "--ergodic", "--out", trace.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&trace).unwrap();
    let parsed: pdblock::solver::Trace = serde_json::from_str(&text).unwrap();
    let rewritten = serde_json::to_string_pretty(&parsed).unwrap();
    assert_eq!(text, rewritten, "JSON round trip is not exact");
    assert!(parsed.ergodic.is_some());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn zero_iteration_run_keeps_initial_row() {
    let dir = tmp_dir("zero");
    let trace = dir.join("t.csv");
    run_ok(&[
        "run", "--algo", "jacobi", "--qp", "--n", "12", "--p", "2", "--blocks", "3", "--iters",
        "0", "--no-ref", "--out", trace.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2); // header + initial row
    assert!(lines[1].starts_with("0,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_exit_codes_follow_checks() {
    // healthy adaptive schedule: exit 0
    let ok = Command::new(exe())
        .args([
            "verify",
            "--schedule",
            "rpdc-adaptive",
            "--theta",
            "0.5",
            "--mu",
            "1",
            "--iters",
            "200",
        ])
        .status()
        .unwrap();
    assert!(ok.success());

    // corrupted k0: at least one condition fails, exit nonzero
    let bad = Command::new(exe())
        .args([
            "verify",
            "--schedule",
            "rpdc-adaptive",
            "--theta",
            "0.5",
            "--mu",
            "1",
            "--iters",
            "200",
            "--k0",
            "0",
        ])
        .status()
        .unwrap();
    assert!(!bad.success());
}

#[test]
fn verify_with_run_checks_jacobi_lemma() {
    let dir = tmp_dir("verifyrun");
    let report = dir.join("report.json");
    let stdout = run_ok(&[
        "verify",
        "--schedule",
        "jacobi",
        "--mu",
        "1",
        "--lf",
        "9",
        "--iters",
        "200",
        "--with-run",
        "--qp",
        "--n",
        "16",
        "--p",
        "2",
        "--blocks",
        "4",
        "--run-iters",
        "150",
        "--ref-iters",
        "50000",
        "--seed",
        "4",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(stdout.contains("PASS lemma21-margins"), "{stdout}");
    assert!(stdout.contains("PASS theorem23-bound"), "{stdout}");
    let report_text = std::fs::read_to_string(&report).unwrap();
    let value: serde_json::Value = serde_json::from_str(&report_text).unwrap();
    assert_eq!(value["schema"], 1);
    assert_eq!(value["all_pass"], true);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_env_var_is_default() {
    let dir = tmp_dir("env");
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    let run_with_env = |out: &Path, seed: &str| {
        let status = Command::new(exe())
            .env("PDBLOCK_SEED", seed)
            .args([
                "run", "--algo", "jacobi", "--qp", "--n", "12", "--p", "2", "--blocks", "3",
                "--iters", "30", "--no-ref", "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    run_with_env(&a, "11");
    run_with_env(&b, "12");
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    std::fs::remove_dir_all(&dir).ok();
}
