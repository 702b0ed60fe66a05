use std::path::{Path, PathBuf};

use serde_json::json;

use medconf::config::Config;
use medconf::error::Error;
use medconf::registry::Method;

fn bench_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bench")
}

fn problems(v: serde_json::Value) -> Vec<String> {
    match Config::from_value(&v, &bench_dir()) {
        Err(Error::Config(p)) => p,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn fixture_config_resolves_against_its_directory() {
    let cfg = Config::load(&bench_dir().join("config.json")).unwrap();
    assert_eq!(cfg.dir, bench_dir());
    assert_eq!(cfg.output_dir(), bench_dir().join("out"));
    assert_eq!(cfg.methods, Method::ALL.to_vec());
    let datasets = cfg.load_datasets().unwrap();
    assert_eq!(datasets.len(), 1);
    assert_eq!(datasets[0].cases.len(), 12);
    assert!(cfg.build_index().unwrap().is_some());
}

#[test]
fn absolute_paths_are_kept() {
    let cfg = Config::load(&bench_dir().join("config.json")).unwrap();
    assert_eq!(cfg.resolve(Path::new("/abs/file")), PathBuf::from("/abs/file"));
}

#[test]
fn top_level_seed_sets_the_scoring_seed() {
    let cfg = Config::from_value(&json!({ "provider": { "kind": "mock", "fixture": "mock.json" }, "seed": 42 }), &bench_dir()).unwrap();
    assert_eq!(cfg.scoring.seed, 42);
    let p = problems(json!({
        "provider": { "kind": "mock", "fixture": "mock.json" },
        "seed": 1,
        "scoring": { "seed": 2 }
    }));
    assert!(p.iter().any(|m| m.contains("seed")), "{p:?}");
}

#[test]
fn missing_files_are_reported_together() {
    let p = problems(json!({
        "provider": { "kind": "mock", "fixture": "no-such-mock.json" },
        "datasets": [{ "name": "x", "cases": "no-such-cases.jsonl" }]
    }));
    assert!(p.iter().any(|m| m.contains("no-such-mock.json")), "{p:?}");
    assert!(p.iter().any(|m| m.contains("no-such-cases.jsonl")), "{p:?}");
}

#[test]
fn provider_is_required() {
    let p = problems(json!({ "model": "m" }));
    assert!(p.iter().any(|m| m.starts_with("provider")), "{p:?}");
}

#[test]
fn method_lists() {
    let base = json!({ "provider": { "kind": "mock", "fixture": "mock.json" } });
    let mut v = base.clone();
    v["methods"] = json!(["medconf", "asp"]);
    let cfg = Config::from_value(&v, &bench_dir()).unwrap();
    assert_eq!(cfg.methods, [Method::Medconf, Method::Asp]);

    v["methods"] = json!(["asp", "asp"]);
    assert!(problems(v.clone()).iter().any(|m| m.contains("twice")));
    v["methods"] = json!("some");
    assert!(problems(v).iter().any(|m| m.contains("methods")));
}

#[test]
fn run_sections_have_defaults() {
    let cfg = Config::from_value(&json!({ "provider": { "kind": "mock", "fixture": "mock.json" } }), &bench_dir()).unwrap();
    assert_eq!(cfg.robustness.groups, 3);
    assert_eq!(cfg.agent.method, Method::Medconf);
    assert_eq!(cfg.agent.threshold, 50.0);
    assert!(cfg.jobs() >= 1);
}
