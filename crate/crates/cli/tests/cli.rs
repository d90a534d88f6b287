use std::path::Path;
use std::process::{Command, Output};

fn ddf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddf")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fast_config(dir: &Path) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, r#"{"resolution": 16}"#).unwrap();
    p.display().to_string()
}

#[test]
fn build_reports_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seq.json");
    let o = ddf(&["build", "--seed", "2", "3", "--stages", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let s = stdout(&o);
    assert!(s.contains("stage 1: (2, 3)  factors (8, 5)"));
    assert!(s.contains("stage 2: (16, 15)"));
    assert!(s.contains("audit: PASS"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["stages"].as_array().unwrap().len(), 2);
}

#[test]
fn build_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        assert_eq!(code(&ddf(&["build", "--seed", "2", "3", "--stages", "2", "--out", p.to_str().unwrap()])), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn malformed_inputs_exit_four() {
    assert_eq!(code(&ddf(&["build", "--seed", "2", "4", "--stages", "2"])), 4);
    assert_eq!(code(&ddf(&["build", "--seed", "2", "3", "--stages", "0"])), 4);
    assert_eq!(code(&ddf(&["build", "--seed", "2", "3", "--stages", "2", "--mesh", "abc"])), 4);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema\": 1}").unwrap();
    assert_eq!(code(&ddf(&["verify", bad.to_str().unwrap()])), 4);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"resolution": 2}"#).unwrap();
    assert_eq!(code(&ddf(&["--config", cfg.to_str().unwrap(), "build", "--seed", "2", "3", "--stages", "1"])), 4);
}

#[test]
fn amalgamation_certificate_round_trips_and_tampering_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fast_config(dir.path());
    let cert = dir.path().join("am.json");
    let o = ddf(&["--config", &cfg, "amalgamate", "--seed", "2", "3", "--stages", "2", "--epsilon", "0.2", "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = ddf(&["--config", &cfg, "--verify", cert.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    v["rounds"][0]["defect"] = serde_json::json!(5.0);
    let bad = dir.path().join("tampered.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let o = ddf(&["--config", &cfg, "verify", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
}

#[test]
fn ssa_step_passes_with_the_flip_and_fails_with_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("ssa.json");
    let o = ddf(&["ssa-step", "--seed", "1", "2", "--stages", "2", "--epsilon", "0.1", "--out", cert.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert!(v["ssa"]["star_defects"].as_array().unwrap().len() == 2);
    assert_eq!(code(&ddf(&["verify", cert.to_str().unwrap()])), 0);

    let o = ddf(&["ssa-step", "--seed", "1", "2", "--stages", "2", "--half-flip", "identity", "--generators", "t"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("half-flip inequality"));
}
