use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cer_core::eval::{save_video_cases, synthetic_video_cases};
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn cer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cer"))
        .current_dir(dir)
        .env_remove("CER_CONFIG")
        .env_remove("CER_LLM_ENDPOINT")
        .env_remove("CER_EMBED_ENDPOINT")
        .env_remove("CER_CLASSIFIER_ENDPOINT")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn macro_row(table: &str) -> Vec<String> {
    let line = table.lines().find(|l| l.starts_with("macro")).unwrap();
    line.split_whitespace().skip(1).take(3).map(String::from).collect()
}

#[test]
fn baseline_report() {
    let d = tempfile::tempdir().unwrap();
    let data = fixtures().join("datasets/healthfc_test.csv");
    let report = d.path().join("out/report.json");
    let out = ok(&cer(
        d.path(),
        &[
            "evaluate",
            "--dataset",
            "healthfc",
            "--data",
            data.to_str().unwrap(),
            "--baseline",
            "all_nei",
            "--report",
            report.to_str().unwrap(),
        ],
    ));
    assert_eq!(macro_row(&out), ["18.80", "33.33", "24.04"]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["n"], 750);
    assert_eq!(r["baseline"], "all_nei");
    assert_eq!(r["metrics"]["percent"]["macro"]["recall"], 33.33);
}

#[test]
fn baseline_rejects_nei_on_binary_data() {
    let d = tempfile::tempdir().unwrap();
    let data = fixtures().join("datasets/bioasq7b_yesno_test.json");
    let out = cer(d.path(), &["evaluate", "--dataset", "bioasq", "--data", data.to_str().unwrap(), "--baseline", "all_nei"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("binary"));
}

#[test]
fn dataset_path_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let data = fixtures().join("datasets/scifact_claims_test.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_cer"))
        .current_dir(d.path())
        .env("CER_SCIFACT_PATH", &data)
        .args(["evaluate", "--dataset", "scifact", "--baseline", "all_true"])
        .output()
        .unwrap();
    assert_eq!(macro_row(&ok(&out)), ["13.72", "33.33", "19.44"]);
}

#[test]
fn mock_verify_claim() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&cer(d.path(), &["--mock-backends", "verify", "Zinc lozenges shorten colds."]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["cached"], false);
    assert!(v["assessment"]["evidence"].as_array().unwrap().len() <= 3);
    let again: Value =
        serde_json::from_str(&ok(&cer(d.path(), &["--mock-backends", "verify", "Zinc lozenges shorten colds."])))
            .unwrap();
    assert_eq!(again["cached"], true);
    assert_eq!(again["assessment"], v["assessment"]);
}

#[test]
fn ingest_index_and_verify_sparse() {
    let d = tempfile::tempdir().unwrap();
    let sample = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/fixtures/corpus_sample.jsonl");
    let cfg = d.path().join("cer.toml");
    std::fs::write(&cfg, "corpus_path = \"corpus.jsonl\"\nindex_path = \"index\"\ncache_path = \"cache\"\n").unwrap();
    let c = cfg.to_str().unwrap();
    let out = ok(&cer(d.path(), &["--config", c, "ingest-corpus", "--from-jsonl", sample.to_str().unwrap()]));
    assert!(out.contains("30 documents (30 new)"));
    let meta: Value = serde_json::from_str(&ok(&cer(d.path(), &["--config", c, "--mock-backends", "build-index"]))).unwrap();
    assert_eq!(meta["meta"]["doc_count"], 30);
    assert!(d.path().join("index/meta.json").exists());
    let v: Value = serde_json::from_str(&ok(&cer(
        d.path(),
        &["--config", c, "--mock-backends", "--retriever", "sparse", "verify", "Does sunscreen prevent melanoma?"],
    )))
    .unwrap();
    assert_eq!(v["assessment"]["evidence"][0]["doc_id"], "fx-0014");
    assert_eq!(v["assessment"]["evidence"][0]["retriever"], "sparse");
}

#[test]
fn verify_text_file_detects_claims() {
    let d = tempfile::tempdir().unwrap();
    let doc = d.path().join("post.txt");
    std::fs::write(&doc, "Hello friends! Garlic lowers blood pressure. Click below. Smoking causes lung cancer.").unwrap();
    let v: Value =
        serde_json::from_str(&ok(&cer(d.path(), &["--mock-backends", "verify", "--text-file", doc.to_str().unwrap()])))
            .unwrap();
    let texts: Vec<&str> = v["results"].as_array().unwrap().iter().map(|a| a["claim"]["text"].as_str().unwrap()).collect();
    assert_eq!(texts, ["Garlic lowers blood pressure.", "Smoking causes lung cancer."]);
}

#[test]
fn video_metrics_from_cases() {
    let d = tempfile::tempdir().unwrap();
    let cases = d.path().join("videos.jsonl");
    save_video_cases(&synthetic_video_cases(), &cases).unwrap();
    let out = ok(&cer(d.path(), &["evaluate", "--videos", cases.to_str().unwrap()]));
    let fake = out.lines().find(|l| l.starts_with("fake")).unwrap();
    assert_eq!(fake.split_whitespace().collect::<Vec<_>>(), ["fake", "94.74", "90.00", "92.31", "20"]);
}

#[test]
fn live_mode_without_endpoints_fails_cleanly() {
    let d = tempfile::tempdir().unwrap();
    let out = cer(d.path(), &["verify", "Aspirin reduces fever."]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("CER_LLM_ENDPOINT"));
}
