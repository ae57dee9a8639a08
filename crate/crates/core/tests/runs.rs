//! File-driven retrieval and safety runs.

use std::path::Path;

use sfs_core::corpus::{write_jsonl, Corpus};
use sfs_core::eval::ContextMode;
use sfs_core::harness::{
    run_retrieval, run_safety_config, write_retrieval_outputs, write_safety_outputs, ClientSpec, RetrievalInputs,
    RunConfig,
};
use sfs_core::synth::{planted_gap, synthetic_mcq, PlantedGapConfig};

const MARKER: &str = "<<evidence>>";

fn answerer(args: &str) -> String {
    format!(
        "python3 {}/tests/fixtures/answerer.py --marker '{MARKER}' {args}",
        env!("CARGO_MANIFEST_DIR")
    )
}

fn save_corpus(corpus: &Corpus, path: &Path) {
    corpus.save(path).unwrap();
}

fn write_config(dir: &Path, body: &str) -> RunConfig {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn retrieval_run_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let planted = planted_gap(&PlantedGapConfig {
        docs: 120,
        queries: 10,
        titles: 4,
        ..Default::default()
    })
    .unwrap();
    save_corpus(&planted.corpus, &dir.path().join("corpus.jsonl"));
    let mut qa = Vec::new();
    write_jsonl(&planted.qa, &mut qa).unwrap();
    std::fs::write(dir.path().join("qa.jsonl"), qa).unwrap();

    let cfg = write_config(
        dir.path(),
        r#"{
            "corpus": "corpus.jsonl",
            "qa": "qa.jsonl",
            "patterns": [{"pattern": "Article (\\d+)", "label": "Article {}"}],
            "provider": {"kind": "hashing", "dim": 256},
            "cutoffs": [1, 5, 10],
            "seed": 3,
            "methods": [
                {"name": "bm25", "retriever": {"kind": "bm25"}},
                {"name": "dense", "retriever": {"kind": "dense"}},
                {"name": "dense+sar", "retriever": {"kind": "dense"}, "sar": {"beta": 0.5}}
            ],
            "output": {"json": "out/report.json", "csv": "out/report.csv"}
        }"#,
    );
    let inputs = RetrievalInputs::load(&cfg).unwrap();
    assert!(inputs.graph.edge_count() > 0);
    let report = run_retrieval(&cfg, inputs).unwrap();
    assert!(report.complete);
    write_retrieval_outputs(&report, &cfg).unwrap();

    let csv = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(csv.starts_with("method,metric,cutoff,value\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 3);
    assert!(csv.contains("dense+sar,recall,10,"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 3);
    assert_eq!(json["complete"], true);

    let dense = report.method("dense").unwrap().mean_recall[&10];
    let sar = report.method("dense+sar").unwrap().mean_recall[&10];
    assert!(sar > dense, "{sar} vs {dense}");
}

fn safety_dir(items: usize) -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, mcq) = synthetic_mcq(items, 4, MARKER, 12).unwrap();
    save_corpus(&corpus, &dir.path().join("corpus.jsonl"));
    let mut buf = Vec::new();
    write_jsonl(&mcq, &mut buf).unwrap();
    std::fs::write(dir.path().join("mcq.jsonl"), buf).unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "corpus": "corpus.jsonl",
            "mcq": "mcq.jsonl",
            "safety": {"concurrency": 2, "timeout_ms": 20000},
            "output": {"csv": "safety.csv", "items_csv": "items.csv", "json": "safety.json"}
        }"#,
    );
    (dir, cfg)
}

#[test]
fn safety_run_with_external_answerer() {
    let (dir, cfg) = safety_dir(12);
    let report = run_safety_config(&cfg, &ClientSpec::Command(answerer(""))).unwrap();
    assert!(report.complete);
    let m = |mode| report.mode(mode).unwrap().clone();
    assert_eq!(m(ContextMode::Full).accuracy, 1.0);
    assert_eq!(m(ContextMode::Partial).accuracy, 1.0);
    assert_eq!(m(ContextMode::Zero).undecodable_rate, 1.0);
    assert_eq!(m(ContextMode::Zero).answered, 12);
    write_safety_outputs(&report, &cfg).unwrap();
    let items = std::fs::read_to_string(dir.path().join("items.csv")).unwrap();
    assert_eq!(items.lines().count(), 1 + 12 * 3);
}

#[test]
fn answerer_crashes_are_retried() {
    let (_dir, cfg) = safety_dir(6);
    let report = run_safety_config(&cfg, &ClientSpec::Command(answerer("--die-after 4"))).unwrap();
    assert!(report.complete);
    assert_eq!(report.mode(ContextMode::Full).unwrap().accuracy, 1.0);

    let mut no_retry = cfg.clone();
    no_retry.safety.retries = 0;
    let report = run_safety_config(&no_retry, &ClientSpec::Command(answerer("--die-after 4"))).unwrap();
    assert!(!report.complete);
    let failed: usize = report.modes.iter().map(|m| m.failed).sum();
    assert!(failed > 0);
    for m in &report.modes {
        assert_eq!(m.answered + m.failed, 6);
    }
}

#[test]
fn mock_runs_are_byte_identical() {
    let (_dir, cfg) = safety_dir(20);
    let a = run_safety_config(&cfg, &ClientSpec::Mock("random".into())).unwrap();
    let b = run_safety_config(&cfg, &ClientSpec::Mock("random".into())).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.items_csv(), b.items_csv());
    assert!(run_safety_config(&cfg, &ClientSpec::Mock("bogus".into())).is_err());
}
