use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn medconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medconf"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn case_study(name: &str) -> String {
    fixtures().join("case_study").join(name).to_str().unwrap().to_string()
}

#[test]
fn scores_a_trace() {
    let out = medconf(&["score", "--method", "asp", "--input-file", &case_study("trace.json")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["method"], "asp");
    assert!((v["score"].as_f64().unwrap() - 0.7642).abs() < 1e-4);
}

#[test]
fn scores_a_response_set() {
    let out = medconf(&["score", "--method", "poc", "--input-file", &case_study("samples.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert!((stdout_json(&out)["score"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn token_method_rejects_a_response_set() {
    let out = medconf(&["score", "--method", "asp", "--input-file", &case_study("samples.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_json(&out)["error"]["message"].as_str().unwrap().contains("response set"));
}

#[test]
fn unknown_method_exits_2() {
    let out = medconf(&["score", "--method", "vibes", "--input-file", &case_study("trace.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["error"]["code"], "unknown_method");
}

#[test]
fn missing_input_exits_1() {
    let out = medconf(&["score", "--method", "asp", "--input-file", "/nonexistent/trace.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_json(&out)["error"].is_object());
}

#[test]
fn medconf_with_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let audit = tmp.path().join("audit.json");
    let out = medconf(&[
        "score",
        "--method",
        "medconf",
        "--config",
        &case_study("config.json"),
        "--input-file",
        &case_study("patient.txt"),
        "--audit",
        audit.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(stdout_json(&out)["score"].as_f64(), Some(30.0));
    let audit: Value = serde_json::from_str(&std::fs::read_to_string(audit).unwrap()).unwrap();
    assert_eq!(audit["keyword"], "appendicitis");
    assert_eq!(audit["ledger"]["score"].as_f64(), Some(30.0));
    assert_eq!(audit["profile"].as_array().unwrap().len(), 8);
}

#[test]
fn audit_needs_medconf() {
    let out = medconf(&[
        "score",
        "--method",
        "asp",
        "--input-file",
        &case_study("trace.json"),
        "--audit",
        "/tmp/never-written.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_lists_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(&cfg, r#"{"provider": {"kind": "mock"}, "colour": 1, "methods": ["asp", "nope"], "jbos": 2}"#).unwrap();
    let out = medconf(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = stdout_json(&out);
    assert_eq!(v["error"]["code"], "config");
    let problems: Vec<String> = serde_json::from_value(v["error"]["problems"].clone()).unwrap();
    for needle in ["colour", "jbos", "nope"] {
        assert!(problems.iter().any(|p| p.contains(needle)), "{needle} not in {problems:?}");
    }
}

#[test]
fn zero_jobs_is_a_config_error() {
    let cfg = fixtures().join("bench/config.json");
    let out = medconf(&["--jobs", "0", "bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let out = medconf(&["score", "--method", "asp"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["error"]["code"], "usage");
    let out = medconf(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let out = medconf(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["score", "bench", "index", "robustness", "agent"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn index_builds_and_reports_chunks() {
    let tmp = tempfile::tempdir().unwrap();
    let idx = tmp.path().join("corpus.idx");
    let corpus = fixtures().join("bench/corpus.jsonl");
    let out = medconf(&["index", "--corpus", corpus.to_str().unwrap(), "--out", idx.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let v = stdout_json(&out);
    assert!(v["chunks"].as_u64().unwrap() > 0);
    let index = medconf::retrieval::Bm25Index::load(&idx).unwrap();
    assert_eq!(index.len() as u64, v["chunks"].as_u64().unwrap());
}

#[test]
fn agent_writes_its_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("bench/config.json");
    let out = medconf(&[
        "agent",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "--threshold",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("agent.json")).unwrap()).unwrap();
    assert_eq!(written[0]["mean_utterances"].as_f64(), Some(1.0));
}

#[test]
fn seed_flag_is_accepted() {
    for seed in ["0", "17"] {
        let out = medconf(&[
            "--seed",
            seed,
            "score",
            "--method",
            "poc",
            "--config",
            &case_study("config.json"),
            "--input-file",
            &case_study("patient.txt"),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let s = stdout_json(&out)["score"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&s));
    }
}
