use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crlbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crlbench")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&crlbench(&["run", "z"], d)), 2);
    assert_eq!(code(&crlbench(&["run", "a", "--env", "mountaincar"], d)), 2);
    assert_eq!(code(&crlbench(&["run", "b", "--algo", "causal"], d)), 2);
    assert_eq!(code(&crlbench(&["run", "a", "--steps", "0"], d)), 2);
    assert_eq!(code(&crlbench(&["run", "c", "--steps", "100"], d)), 2);
    assert_eq!(code(&crlbench(&["run", "a", "--config", "missing.json"], d)), 2);
    fs::write(d.join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&crlbench(&["run", "a", "--config", "bad.json"], d)), 2);
    fs::write(d.join("b.json"), r#"{"study": "b"}"#).unwrap();
    assert_eq!(code(&crlbench(&["run", "a", "--config", "b.json"], d)), 2);
    assert_eq!(code(&crlbench(&["plot", "missing.jsonl", "--out", "f.svg"], d)), 2);
    assert_eq!(code(&crlbench(&["gen-dataset", "dosage", "--n", "0", "--out", "x.csv"], d)), 2);
    assert_eq!(code(&crlbench(&["gen-dataset", "dosage", "--n", "5", "--strength", "2", "--out", "x.csv"], d)), 2);
    assert_eq!(code(&crlbench(&["frobnicate"], d)), 2);
}

#[test]
fn run_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"study": "a", "eval_episodes": 2, "ppo": {"rollout_steps": 256}}"#).unwrap();
    let o = crlbench(&["run", "a", "--config", "cfg.json", "--steps", "512", "--seeds", "3", "--seed-base", "10", "--out", "out"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("id_return") && stdout.contains("standard_ood_over_id"));

    let metrics = fs::read_to_string(d.join("out/metrics.jsonl")).unwrap();
    assert!(metrics.contains(r#""seed":10"#) && metrics.contains(r#""seed":12"#) && !metrics.contains(r#""seed":13"#));
    let cfg = fs::read_to_string(d.join("out/config.json")).unwrap();
    assert!(cfg.contains(r#""total_steps": 512"#));

    let o = crlbench(&["plot", "out/metrics.jsonl", "--out", "fig.svg"], d);
    assert_eq!(code(&o), 0);
    let svg = fs::read_to_string(d.join("fig.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn gen_dataset_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a.csv", "b.csv"] {
        let o = crlbench(&["gen-dataset", "targeting", "--n", "50", "--strength", "0.8", "--seed", "3", "--out", name], d);
        assert_eq!(code(&o), 0);
    }
    let a = fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 51);
    assert!(a.starts_with("s0,s1,a,r,z,u_true"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = crlbench(&["causal-core", "selftest"], dir.path());
    let status = code(&o);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(status, 0, "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 20);
}
