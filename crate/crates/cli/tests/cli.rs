use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn eprsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("EPRSIM_SEED")
        .output()
        .expect("spawn eprsim")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn ideal_run_reaches_four_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = eprsim(
        &[
            "--fn-a", "balanced", "--fn-b", "constant", "--noise-p", "1", "--shots", "100000", "--seed", "7",
            "--out-records", "r.csv", "--out-report", "rep.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("rep.json"));
    assert_eq!(r["decision_a"], "balanced");
    assert_eq!(r["decision_b"], "constant");
    assert!((num(&r["speedup"]) - 4.0).abs() < 0.01);
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("shot,arm,basis,d_first,d_second\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 100_000);
}

#[test]
fn half_noise_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = eprsim(&["--noise-p", "0.5", "--shots", "20000", "--out-report", "rep.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let r = report(&dir.path().join("rep.json"));
    assert_eq!(r["decision_a"], "inconclusive");
    assert_eq!(r["decision_b"], "inconclusive");
    assert!(r["speedup"].is_null() && r["p_success_lower"].is_null());
    assert!(dir.path().join("records.csv").exists());
}

#[test]
fn exact_only_writes_no_records() {
    let dir = tempfile::tempdir().unwrap();
    for p in ["0.65", "0.8", "1"] {
        let out = eprsim(&["--exact-only", "--noise-p", p, "--out-records", "r.csv"], dir.path());
        assert!(matches!(out.status.code(), Some(0 | 2)));
        let r: Value = serde_json::from_slice(&out.stdout).unwrap();
        let p: f64 = p.parse().unwrap();
        assert!((num(&r["exact"]["arm_a"]["mean"]) - p * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((num(&r["exact"]["arm_b"]["mean"]) + p * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(r["mode"], "exact");
        assert_eq!(out.status.code() == Some(2), r["decision_a"] == "inconclusive");
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn json_numbers_carry_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = eprsim(&["--exact-only", "--noise-p", "0.9"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"mean\": 1.27279220613579"), "{text}");
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = |tag: &str| {
        vec![
            "--noise-p".to_string(), "0.8".into(), "--efficiency".into(), "0.9".into(), "--shots".into(), "5000".into(),
            "--seed".into(), "11".into(), "--out-records".into(), format!("{tag}.csv"), "--out-report".into(),
            format!("{tag}.json"),
        ]
    };
    for tag in ["one", "two"] {
        let a = args(tag);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        assert_eq!(eprsim(&refs, dir.path()).status.code(), Some(0));
    }
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("one.csv"), read("two.csv"));
    assert_eq!(read("one.json"), read("two.json"));
    assert!(num(&report(&dir.path().join("one.json"))["dropped"]["arm_a"]) > 0.0);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"seed": 5, "shots": 100, "format": "json"}"#).unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_eprsim"));
        cmd.args(["--exact-only"]).args(extra).current_dir(dir.path()).env_remove("EPRSIM_SEED");
        if let Some(s) = env {
            cmd.env("EPRSIM_SEED", s);
        }
        let out = cmd.output().unwrap();
        let r: Value = serde_json::from_slice(&out.stdout).unwrap();
        r["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(&[], None), 0);
    assert_eq!(run(&[], Some("9")), 9);
    assert_eq!(run(&["--config", "cfg.json"], Some("9")), 5);
    assert_eq!(run(&["--config", "cfg.json", "--seed", "3"], Some("9")), 3);
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(eprsim(&["--noise-p", "1.5"], dir.path()).status.code(), Some(1));
    assert_eq!(eprsim(&["--config", "missing.json"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.json"), r#"{"noise": 0.3}"#).unwrap();
    assert_eq!(eprsim(&["--config", "bad.json"], dir.path()).status.code(), Some(1));
    assert_eq!(eprsim(&["--confidence-k", "-1", "--exact-only"], dir.path()).status.code(), Some(1));
    assert_eq!(eprsim(&["--fn-a", "linear"], dir.path()).status.code(), Some(1));
    assert_eq!(eprsim(&["--shots"], dir.path()).status.code(), Some(1));
    assert_eq!(eprsim(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(eprsim(&["--out-report", "no/such/dir/r.json", "--exact-only"], dir.path()).status.code(), Some(1));
}

#[test]
fn text_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = eprsim(&["--exact-only", "--format", "text"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("decision = balanced") && text.contains("decision = constant"), "{text}");
    assert!(text.contains("speed-up: 4.00000000000000"));
}

#[test]
fn selftest_passes_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let ok = eprsim(&["selftest"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("all 14 checks passed"));

    let bad = eprsim(&["selftest", "--inject-fault", "hwp-sign"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("FAIL  hwp2-sign arm A"), "{text}");
    assert!(text.contains("PASS  tsirelson"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"fn_a": "constant", "fn_b": "constant", "noise_p": 0.9, "exact_only": true}"#,
    )
    .unwrap();
    let out = eprsim(&["--config", "cfg.json", "--fn-b", "balanced"], dir.path());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["decision_a"], "constant");
    assert_eq!(r["decision_b"], "balanced");
    assert_eq!(r["config"]["noise_p"].to_string(), "0.900000000000000");
}
