use std::path::Path;
use std::process::{Command, Output};

fn urex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urex"))
        .args(args)
        .output()
        .unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn small_corpus(dir: &Path, n: usize) -> String {
    let config = path(dir, "synth.json");
    std::fs::write(&config, format!(r#"{{"n_instances": {n}}}"#)).unwrap();
    let corpus = path(dir, "corpus.jsonl");
    let out = urex(&["synth", "--config", &config, "--out", &corpus]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    corpus
}

#[test]
fn synth_writes_one_line_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 250);
    let text = std::fs::read_to_string(corpus).unwrap();
    assert_eq!(text.lines().count(), 250);
}

#[test]
fn etype_report_has_all_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 300);
    let report = path(dir.path(), "report.json");
    assert!(urex(&["etype", "--corpus", &corpus, "--report", &report]).status.success());
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    for key in ["b3", "v", "ari", "n_clusters"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn eval_rejects_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let big = small_corpus(dir.path(), 40);
    let labels = path(dir.path(), "labels.json");
    assert!(urex(&["etype", "--corpus", &big, "--out", &labels]).status.success());
    let small = path(dir.path(), "small.jsonl");
    let text = std::fs::read_to_string(&big).unwrap();
    std::fs::write(&small, text.lines().take(5).collect::<Vec<_>>().join("\n")).unwrap();
    let out = urex(&["eval", "--corpus", &small, "--pred", &labels]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("40") && stderr.contains('5'), "{stderr}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(urex(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(urex(&["eval", "--corpus", "x.jsonl"]).status.code(), Some(1));
    assert_eq!(urex(&["train", "--corpus", "x.jsonl", "--runs", "0"]).status.code(), Some(1));
}

#[test]
fn help_lists_flags() {
    let out = urex(&["train", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in ["--corpus", "--dev", "--clusters", "--features", "--runs", "--precision"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn malformed_corpus_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 3);
    let mut text = std::fs::read_to_string(&corpus).unwrap();
    text.push_str("{not json}\n");
    std::fs::write(&corpus, text).unwrap();
    let out = urex(&["etype", "--corpus", &corpus]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 4"), "{stderr}");
}
