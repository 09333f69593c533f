use std::path::Path;
use std::process::{Command, Output};

fn gasbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasbound")).args(args).env("WORKERS", "1").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Both full-bounds runs in one test so they never run at the same time.
#[test]
fn full_bounds_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = gasbound(&[
        "explore", "--model", "token-notify-vuln", "--gas", "6", "--addresses", "4", "--max-txs", "3", "--out", path(&out),
    ]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["violation_count"].as_u64().unwrap() >= 1);
    assert_eq!(report["complete"], true);

    let o = gasbound(&["explore", "--model", "token-notify-safe", "--gas", "6", "--addresses", "4", "--max-txs", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("0 violation(s)"));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let args = ["explore", "--model", "token-notify-vuln", "--gas", "5", "--max-txs", "2", "--out"];
    let run = |p: &Path, workers: &str| {
        let mut v = args.to_vec();
        v.extend([path(p), "--workers", workers]);
        assert_eq!(code(&gasbound(&v)), 2);
        std::fs::read(p).unwrap()
    };
    let first = run(&a, "1");
    assert_eq!(first, run(&b, "1"));
    assert_eq!(first, run(&c, "4"));
    let fz = |p: &Path, workers: &str| {
        let o = gasbound(&["fuzz", "--model", "auction", "--iterations", "300", "--seed", "4", "--workers", workers, "--out", path(p)]);
        assert_eq!(code(&o), 0);
        std::fs::read(p).unwrap()
    };
    assert_eq!(fz(&a, "1"), fz(&b, "3"));
}

#[test]
fn config_file_is_checked_and_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"model": "token-plain", "gass": 4}"#).unwrap();
    let o = gasbound(&["explore", "--config", path(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gass"));

    let cfg = dir.path().join("c.json");
    let out = dir.path().join("r.json");
    std::fs::write(&cfg, r#"{"model": "token-plain", "gas": 2, "max_txs": 1, "addresses": 2}"#).unwrap();
    let o = gasbound(&["explore", "--config", path(&cfg), "--gas", "3", "--out", path(&out)]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["config"]["model"]["gas"], 3);
    assert_eq!(report["config"]["model"]["addresses"], 2);
    assert_eq!(report["config"]["max_txs"], 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&gasbound(&["explore", "--model", "nope"])), 1);
    assert_eq!(code(&gasbound(&["explore", "--gas", "0"])), 1);
    assert_eq!(code(&gasbound(&["frobnicate"])), 1);
    assert_eq!(code(&gasbound(&["evm", "run", "--code", "6", "--gas", "3"])), 1);
    assert_eq!(code(&gasbound(&["replay", "/nonexistent/trace.json"])), 1);
    assert_eq!(code(&gasbound(&["--help"])), 0);
}

#[test]
fn budget_cap_is_incomplete() {
    let o = gasbound(&["explore", "--model", "token-plain", "--max-branches", "5"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("INCOMPLETE"));
}

#[test]
fn emitted_traces_replay_and_shrink() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = gasbound(&["fuzz", "--model", "token-notify-vuln", "--iterations", "400", "--seed", "2", "--out", path(&report)]);
    assert_eq!(code(&o), 2);
    let o = gasbound(&["replay", path(&report)]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    assert!(!stdout(&o).contains("DIVERGED"));

    let small = dir.path().join("s.json");
    assert_eq!(code(&gasbound(&["shrink", path(&report), "--out", path(&small)])), 2);
    let rep = dir.path().join("rep.json");
    assert_eq!(code(&gasbound(&["replay", path(&small), "--out", path(&rep)])), 2);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r["mode"], "replay");
    assert!(r["violation"].is_object());

    // A trace whose recorded hashes no longer match diverges.
    let mut t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&small).unwrap()).unwrap();
    t["frames"][0]["state_hash_after"] = "0000000000000000".into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, t.to_string()).unwrap();
    assert_eq!(code(&gasbound(&["replay", path(&bad)])), 3);
}

#[test]
fn shrink_refuses_clean_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    assert_eq!(code(&gasbound(&["fuzz", "--model", "token-notify-vuln", "--iterations", "400", "--seed", "2", "--out", path(&report)])), 2);
    let mut r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let mut t = r["violations"][0]["traces"][0].take();
    t["transactions"] = serde_json::json!([]);
    t["choices"] = serde_json::json!([]);
    t["frames"] = serde_json::json!([]);
    t["violation"] = serde_json::Value::Null;
    let clean = dir.path().join("clean.json");
    std::fs::write(&clean, t.to_string()).unwrap();
    assert_eq!(code(&gasbound(&["replay", path(&clean)])), 0);
    assert_eq!(code(&gasbound(&["shrink", path(&clean)])), 1);
}

#[test]
fn evm_commands() {
    let o = gasbound(&["evm", "check-inc"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("1005 of 1005"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("evm.json");
    // PUSH1 1, PUSH1 2, ADD, PUSH1 0, SSTORE
    let o = gasbound(&["evm", "run", "--code", "0x6001600201600055", "--gas", "20", "--storage", "7=9", "--out", path(&out)]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.lines().next().unwrap().starts_with("pc=0x0000 PUSH1"));
    assert!(s.contains("RETURNS"));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["storage"]["0x0"], "0x3");
    assert_eq!(r["storage"]["0x7"], "0x9");

    let o = gasbound(&["evm", "run", "--code", "6001600201", "--gas", "20", "--steps", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(stdout(&o).contains("OK(pc=0x4"));
}
