//! Runs the `sectsum` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &[&str] = &[
    "--set", "d_model=8", "--set", "d_ff=16", "--layers", "1", "--heads", "2",
    "--set", "epochs=2", "--set", "accumulation_steps=2", "--set", "encoder_seed=3",
];

fn sectsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sectsum"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn doc_line(id: &str, reference: &str, sentences: &[&str]) -> String {
    serde_json::json!({
        "id": id,
        "reference_summary": reference,
        "sections": [{"title": "Body", "sentences": sentences}],
    })
    .to_string()
}

fn ten_sentence_doc(id: &str) -> String {
    let s: Vec<String> = (0..10).map(|i| format!("sentence {i} of {id} about topic{i}.")).collect();
    let refs: Vec<&str> = s.iter().map(String::as_str).collect();
    doc_line(id, "topic1 topic4 about", &refs)
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    let lines: Vec<String> = ["a", "b", "c"].iter().map(|id| ten_sentence_doc(id)).collect();
    fs::write(&good, lines.join("\n")).unwrap();
    let out = dir.path().join("out.jsonl");

    let o = sectsum(&["ingest", "--input", p(&good), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(jsonl(&out).len(), 3);
    assert!(dir.path().join("out.jsonl.meta.json").exists());

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, format!("{}\n{{\"id\": \"x\", oops\n{}\n", lines[0], lines[2])).unwrap();
    let strict_out = dir.path().join("strict.jsonl");
    let o = sectsum(&["ingest", "--input", p(&bad), "--out", p(&strict_out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert!(!strict_out.exists());

    let lenient_out = dir.path().join("lenient.jsonl");
    let o = sectsum(&["ingest", "--input", p(&bad), "--out", p(&lenient_out), "--lenient"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ids: Vec<Value> = jsonl(&lenient_out).into_iter().map(|d| d["id"].clone()).collect();
    assert_eq!(ids, vec![Value::from("a"), Value::from("c")]);

    let o = sectsum(&["ingest", "--input", p(&dir.path().join("missing.jsonl")), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_usage_exits_two() {
    assert_eq!(code(&sectsum(&["frobnicate"])), 2);
    assert_eq!(code(&sectsum(&["--set", "noequals", "bench", "--sizes", "10"])), 2);
}

#[test]
fn invalid_config_exits_one() {
    let o = sectsum(&["--heads", "3", "bench", "--sizes", "10"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = sectsum(&["--set", "no_such_key=1", "bench", "--sizes", "10"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[derive(serde::Deserialize)]
struct Golden {
    id: String,
    optimal_subsets: Vec<Vec<usize>>,
}

#[test]
fn label_matches_brute_force_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("labels.jsonl");
    let corpus = fixtures().join("oracle_docs.jsonl");
    let o = sectsum(&["--budget-ratio", "0.375", "label", "--corpus", p(&corpus), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let golden: Vec<Golden> = fs::read_to_string(fixtures().join("oracle_golden.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let labels = jsonl(&out);
    assert_eq!(labels.len(), golden.len());
    for (rec, gold) in labels.iter().zip(&golden) {
        assert_eq!(rec["id"], gold.id.as_str());
        let picked: Vec<usize> = rec["labels"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.as_u64() == Some(1))
            .map(|(i, _)| i)
            .collect();
        assert!(gold.optimal_subsets.contains(&picked), "{}: {picked:?}", gold.id);
    }
}

#[test]
fn label_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    fs::write(
        &corpus,
        [
            doc_line("empty", "", &["one thing.", "another thing."]),
            doc_line("full", "one two three", &["one.", "two.", "three."]),
        ]
        .join("\n"),
    )
    .unwrap();
    let out = dir.path().join("l.jsonl");
    let o = sectsum(&["--budget-ratio", "1.0", "label", "--corpus", p(&corpus), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("`empty` has an empty reference"), "{}", stderr(&o));
    let recs = jsonl(&out);
    assert_eq!(recs[0]["labels"], serde_json::json!([0, 0]));
    assert_eq!(recs[1]["labels"], serde_json::json!([1, 1, 1]));
}

/// Ingest, label, train and summarize a small corpus; returns the paths.
fn small_pipeline(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = dir.join("c.jsonl");
    let lines: Vec<String> = (0..4).map(|i| ten_sentence_doc(&format!("d{i}"))).collect();
    fs::write(&corpus, lines.join("\n")).unwrap();
    let labels = dir.join("l.jsonl");
    let ckpt = dir.join("model.ckpt");
    let mut args = SMALL.to_vec();
    args.extend(["label", "--corpus", p(&corpus), "--out", p(&labels)]);
    assert_eq!(code(&sectsum(&args)), 0);
    let mut args = SMALL.to_vec();
    args.extend(["train", "--corpus", p(&corpus), "--labels", p(&labels), "--out", p(&ckpt)]);
    let o = sectsum(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (corpus, ckpt)
}

#[test]
fn summarize_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ckpt) = small_pipeline(dir.path());
    let summaries = dir.path().join("s.jsonl");
    let mut args = SMALL.to_vec();
    args.extend(["--budget-ratio", "0.2", "--trigram-threshold", "none"]);
    args.extend(["summarize", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out", p(&summaries)]);
    let o = sectsum(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = jsonl(&summaries);
    assert_eq!(recs.len(), 4);
    for r in &recs {
        assert_eq!(r["selected"].as_array().unwrap().len(), 2);
        assert_eq!(r["scores"].as_array().unwrap().len(), 10);
    }

    // references as summaries score perfectly
    let refs = dir.path().join("refs.jsonl");
    let text: String = recs
        .iter()
        .map(|r| serde_json::json!({"id": r["id"], "summary": "topic1 topic4 about"}).to_string() + "\n")
        .collect();
    fs::write(&refs, text).unwrap();
    let o = sectsum(&["evaluate", "--summaries", p(&refs), "--corpus", p(&corpus)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        for c in &cols[1..] {
            assert_eq!(c.parse::<f64>().unwrap(), 1.0, "{row}");
        }
    }
}

#[test]
fn mismatched_checkpoint_is_rejected_with_a_diff() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ckpt) = small_pipeline(dir.path());
    let mut args = SMALL.to_vec();
    args.extend(["--window", "7"]);
    let out = dir.path().join("s.jsonl");
    args.extend(["summarize", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out", p(&out)]);
    let o = sectsum(&args);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("window: artifact="), "{err}");
    assert!(err.contains("current=7"), "{err}");
    assert!(!out.exists());
}

#[test]
fn bench_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.tsv");
    let o = sectsum(&["--window", "4", "bench", "--sizes", "16,32", "--repeats", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tsv = fs::read_to_string(&out).unwrap();
    assert_eq!(tsv.lines().count(), 3, "{tsv}");
    assert!(String::from_utf8(o.stdout).unwrap().contains("n 16 -> 32"));
}
