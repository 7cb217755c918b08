use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mqpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqpc"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn equal_secrets_run() {
    let out = mqpc(&[
        "run",
        "--d",
        "5",
        "--n",
        "4",
        "--L",
        "8",
        "--seed",
        "7",
        "--secrets",
        "13,13,13,13",
    ]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["verdict"]["outcome"], "all-equal");
    assert_eq!(summary["config"]["seed"], 7);
    assert!(summary["S_V"].is_array());
    assert_eq!(summary["detection_events"], 0);
}

#[test]
fn unequal_secrets_run() {
    let out = mqpc(&[
        "run",
        "--d",
        "4",
        "--n",
        "3",
        "--L",
        "4",
        "--secrets",
        "5,5,4",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("not-all-equal"));
}

#[test]
fn attacked_run_exits_with_abort() {
    let out = mqpc(&[
        "run",
        "--d",
        "4",
        "--n",
        "3",
        "--L",
        "2",
        "--decoys",
        "32",
        "--attack",
        "measure-resend",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("eavesdropper-detected"));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("t.jsonl");
    let out = mqpc(&[
        "run",
        "--d",
        "5",
        "--n",
        "4",
        "--L",
        "4",
        "--secrets",
        "1,2,3",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("secrets"));
    assert!(!out_path.exists());
    assert!(
        fs::read_dir(dir.path()).unwrap().next().is_none(),
        "no partial artifacts"
    );

    assert_eq!(code(&mqpc(&["run", "--d", "3", "--n", "3", "--L", "1"])), 2);
    assert_eq!(code(&mqpc(&["run", "--n", "3"])), 2);
    assert_eq!(code(&mqpc(&["frobnicate"])), 2);
    assert_eq!(code(&mqpc(&["run", "--d", "x"])), 2);
    assert_eq!(
        code(&mqpc(&[
            "audit",
            "collusion",
            "--d",
            "4",
            "--n",
            "3",
            "--L",
            "1",
            "--colluders",
            "1,2",
            "--target",
            "2"
        ])),
        2
    );
}

#[test]
fn config_file_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("session.toml");
    fs::write(&cfg, "d = 3\nn = 2\nL = 3\nseed = 4\nsecrets = [6, 6]\n").unwrap();
    let out = mqpc(&["run", "--config", cfg.to_str().unwrap(), "--d", "5"]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["config"]["d"], 5);
    assert_eq!(summary["config"]["L"], 3);
    assert_eq!(summary["verdict"]["outcome"], "all-equal");

    fs::write(&cfg, "d = [").unwrap();
    assert_eq!(code(&mqpc(&["run", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(
        code(&mqpc(&[
            "run",
            "--config",
            dir.path().join("missing.toml").to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn oracle_check() {
    let out = mqpc(&["oracle-check", "--d", "2", "--n", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "all 256 branches matched");
}

#[test]
fn soundness_audit_reports_the_gap() {
    let out = mqpc(&["audit", "soundness", "--d", "2", "--n", "3", "--L", "1"]);
    assert_eq!(code(&out), 3);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["false_equal_cases"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c == &serde_json::json!([1, 1, 0])));

    let out = mqpc(&["audit", "soundness", "--d", "4", "--n", "3", "--L", "2"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn privacy_audits() {
    let out = mqpc(&["audit", "leakage", "--d", "4", "--n", "3", "--L", "1"]);
    assert_eq!(code(&out), 0);
    let out = mqpc(&[
        "audit", "leakage", "--d", "4", "--n", "3", "--L", "1", "--sums", "integer",
    ]);
    assert_eq!(code(&out), 3);
    let out = mqpc(&[
        "audit",
        "collusion",
        "--d",
        "4",
        "--n",
        "3",
        "--L",
        "1",
        "--colluders",
        "1,3",
        "--target",
        "2",
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn attack_and_efficiency() {
    let out = mqpc(&["attack", "--d", "2", "--trials", "100000", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["rate"].as_f64().unwrap() - 0.25).abs() < 0.01);

    let out = mqpc(&["efficiency", "--n", "3", "--L", "4"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["particles_counted"], 40);
    assert_eq!(report["rows"][0]["eta_den"], 10);
    assert_eq!(code(&mqpc(&["audit", "efficiency", "--n", "2"])), 0);
}

fn run_twice(args: &[&str], dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let a = dir.join("a.out");
    let b = dir.join("b.out");
    let first = mqpc(&[args, &["--out", a.to_str().unwrap()]].concat());
    let second = mqpc(&[args, &["--out", b.to_str().unwrap()]].concat());
    assert_eq!(first.stdout, second.stdout, "{args:?}");
    assert_eq!(code(&first), code(&second));
    (fs::read(a).unwrap(), fs::read(b).unwrap())
}

#[test]
fn transcripts_replay_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = run_twice(
        &["run", "--d", "4", "--n", "3", "--L", "4", "--seed", "21"],
        dir.path(),
    );
    assert_eq!(a, b);
    let first_line = String::from_utf8(a.clone())
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(first_line.contains("\"seed\":21"));

    let (c, _) = run_twice(
        &["run", "--d", "4", "--n", "3", "--L", "4", "--seed", "22"],
        dir.path(),
    );
    let swaps = |bytes: &[u8]| -> Vec<String> {
        String::from_utf8(bytes.to_vec())
            .unwrap()
            .lines()
            .filter(|l| l.contains("\"event\":\"swap\""))
            .map(|l| l.split("\"payload\"").nth(1).unwrap().to_string())
            .collect()
    };
    assert_ne!(swaps(&a), swaps(&c));
}
