//! Subcommand bodies. Each returns a report and leaves printing to the
//! caller.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sectsum_core::corpus::{Document, LabelRecord};
use sectsum_core::encoder::{encode_sentences, SentenceEncoder};
use sectsum_core::extractor::{select_sentences, sentence_budget};
use sectsum_core::model::{document_globals, init_params, predict};
use sectsum_core::numerics::ParamStore;
use sectsum_core::rouge::{oracle_labels, recall_triple};
use sectsum_core::scaling::{doubling_ratios, scaling_bench, scaling_tsv, DoublingRatio, ScalingConfig, ScalingRow};
use sectsum_core::synthetic::{planted_corpus, PlantedConfig};
use sectsum_core::training::{self, load_checkpoint, save_checkpoint, EvalReport, PreparedDoc, Sgd, TrainReport, METRICS_HEADER};

use crate::config::{check_hash, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{check_artifact, document_from_line, jsonl_lines, read_documents, read_labels, read_text, to_jsonl, write_artifact};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub docs: usize,
    pub sentences: usize,
    pub sections: usize,
    /// Ids of documents cut at `max_sentences`.
    pub truncated: Vec<String>,
    /// `(line, message)` for every rejected line.
    pub failures: Vec<(usize, String)>,
}

/// Parses, validates and normalizes a corpus. Bad lines are fatal unless
/// `lenient`; a corpus with no good line is always fatal.
pub fn ingest(input: &Path, out: &Path, cfg: &RunConfig, lenient: bool) -> CliResult<IngestReport> {
    let text = read_text(input)?;
    let mut report = IngestReport::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut docs = Vec::new();
    for (no, line) in jsonl_lines(&text) {
        let mut doc = match document_from_line(line, no) {
            Ok(d) => d,
            Err(e) => {
                report.failures.push((no, e));
                continue;
            }
        };
        if let Some(first) = seen.get(&doc.id) {
            report
                .failures
                .push((no, format!("line {no}: id `{}` already used on line {first}", doc.id)));
            continue;
        }
        seen.insert(doc.id.clone(), no);
        if doc.truncate(cfg.model.max_sentences) {
            report.truncated.push(doc.id.clone());
        }
        report.sentences += doc.n_sentences;
        report.sections += doc.section_count();
        docs.push(doc);
    }
    report.docs = docs.len();
    let listing = || {
        report
            .failures
            .iter()
            .map(|(_, m)| m.as_str())
            .collect::<Vec<_>>()
            .join("\n  ")
    };
    if docs.is_empty() {
        return Err(CliError::contract(format!("no valid documents in {}:\n  {}", input.display(), listing())));
    }
    if !report.failures.is_empty() && !lenient {
        return Err(CliError::contract(format!(
            "{} of {} lines rejected (use --lenient to skip them):\n  {}",
            report.failures.len(),
            report.failures.len() + docs.len(),
            listing()
        )));
    }
    let body: String = docs.iter().map(|d| d.to_json_line() + "\n").collect();
    write_artifact(out, &body, cfg, "ingest")?;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelReport {
    pub docs: usize,
    pub positives: usize,
    /// Documents whose reference has no tokens; all their labels are 0.
    pub empty_references: Vec<String>,
}

/// Greedy oracle labels for every document at `ceil(budget_ratio · n)`.
pub fn label(corpus: &Path, out: &Path, cfg: &RunConfig) -> CliResult<LabelReport> {
    let docs = read_documents(corpus)?;
    let ratio = cfg.selection().budget_ratio;
    let done = AtomicUsize::new(0);
    let step = (docs.len() / 10).max(1);
    let results: Vec<_> = docs
        .par_iter()
        .map(|d| {
            let r = oracle_labels(d, sentence_budget(ratio, d.n_sentences));
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if k.is_multiple_of(step) || k == docs.len() {
                log::info!("labelled {k}/{}", docs.len());
            }
            r
        })
        .collect::<Result<_, _>>()?;
    let mut report = LabelReport {
        docs: docs.len(),
        ..LabelReport::default()
    };
    let mut records = Vec::with_capacity(docs.len());
    for (d, r) in docs.iter().zip(results) {
        if r.degenerate {
            report.empty_references.push(d.id.clone());
        }
        report.positives += r.labels.iter().filter(|&&l| l == 1).count();
        records.push(LabelRecord {
            id: d.id.clone(),
            labels: r.labels,
        });
    }
    write_artifact(out, &to_jsonl(&records), cfg, "label")?;
    Ok(report)
}

pub struct TrainPaths<'a> {
    pub corpus: &'a Path,
    pub labels: &'a Path,
    pub heldout: Option<&'a Path>,
    pub checkpoint: &'a Path,
    pub metrics: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub report: TrainReport,
    /// Quality of the final parameters on the held-out split.
    pub heldout: Option<EvalReport>,
}

fn prepare(docs: Vec<Document>, labels: &HashMap<String, Vec<u8>>, cfg: &RunConfig) -> CliResult<Vec<PreparedDoc>> {
    let encoder = cfg.build_encoder()?;
    docs.into_par_iter()
        .map(|d| {
            let l = labels
                .get(&d.id)
                .ok_or_else(|| CliError::contract(format!("no labels for document `{}`", d.id)))?
                .clone();
            Ok(PreparedDoc::new(d, l, encoder.as_ref(), &cfg.model, &cfg.train)?)
        })
        .collect()
}

pub fn train(paths: &TrainPaths<'_>, cfg: &RunConfig) -> CliResult<TrainSummary> {
    let labels = read_labels(paths.labels)?;
    let train_docs = prepare(read_documents(paths.corpus)?, &labels, cfg)?;
    let heldout = match paths.heldout {
        Some(p) => prepare(read_documents(p)?, &labels, cfg)?,
        None => Vec::new(),
    };
    let mut params = init_params(&cfg.model, cfg.train.seed)?;
    let mut rows = vec![METRICS_HEADER.to_string()];
    let report = training::train(&mut params, &cfg.model, &cfg.train, &train_docs, &heldout, &mut Sgd, |m| {
        log::info!("{}", m.csv_row());
        rows.push(m.csv_row());
    })?;
    save_checkpoint(paths.checkpoint, &params, cfg.train.seed, cfg.hash(), &cfg.canonical())?;
    if let Some(m) = paths.metrics {
        write_artifact(m, &(rows.join("\n") + "\n"), cfg, "train")?;
    }
    let heldout = if heldout.is_empty() {
        None
    } else {
        Some(training::evaluate(&params, &cfg.model, &heldout, &cfg.selection())?)
    };
    Ok(TrainSummary { report, heldout })
}

/// One line of a summaries file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub id: String,
    pub selected: Vec<usize>,
    pub sentences: Vec<String>,
    pub scores: Vec<f64>,
}

fn summarize_doc(
    params: &ParamStore,
    encoder: &dyn SentenceEncoder,
    cfg: &RunConfig,
    doc: &Document,
) -> CliResult<SummaryRecord> {
    let model = &cfg.model;
    let semantic = encode_sentences(doc, encoder, model.max_chunk_tokens)?;
    let globals = document_globals(model, doc.n_sentences, cfg.train.seed, &doc.id)?;
    let scores = predict(params, model, doc, &semantic, &globals)?;
    let selected = select_sentences(doc, &scores, &cfg.selection())?;
    let sentences = selected
        .iter()
        .map(|&i| doc.sentence(i).expect("selected index in range").text.clone())
        .collect();
    Ok(SummaryRecord {
        id: doc.id.clone(),
        selected,
        sentences,
        scores,
    })
}

/// Scores and selects sentences for every document with a trained
/// checkpoint. Records come back sorted by id.
pub fn summarize(checkpoint: &Path, corpus: &Path, out: &Path, cfg: &RunConfig) -> CliResult<Vec<SummaryRecord>> {
    let ckpt = load_checkpoint(checkpoint)?;
    check_hash(ckpt.header.config_hash, &ckpt.header.config, cfg, "checkpoint")?;
    let encoder = cfg.build_encoder()?;
    let mut docs = read_documents(corpus)?;
    for d in &mut docs {
        if d.truncate(cfg.model.max_sentences) {
            log::warn!("document `{}` truncated to {} sentences", d.id, cfg.model.max_sentences);
        }
    }
    let mut records: Vec<SummaryRecord> = docs
        .par_iter()
        .map(|d| summarize_doc(&ckpt.params, encoder.as_ref(), cfg, d))
        .collect::<CliResult<_>>()?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    write_artifact(out, &to_jsonl(&records), cfg, "summarize")?;
    Ok(records)
}

/// A summary line as `evaluate` reads it: either the `summarize` output or
/// a plain `{"id", "summary"}` record.
#[derive(Deserialize)]
struct SummaryInput {
    id: String,
    #[serde(default)]
    sentences: Option<Vec<String>>,
    #[serde(default)]
    summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    /// ROUGE-1, ROUGE-2 and ROUGE-L recall.
    pub recall: [f64; 3],
}

pub const EVAL_HEADER: &str = "id\trouge1_recall\trouge2_recall\trougeL_recall";

pub fn eval_tsv(rows: &[EvalRow], mean: [f64; 3]) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.id, r.recall[0], r.recall[1], r.recall[2]));
    }
    out.push_str(&format!("mean\t{}\t{}\t{}\n", mean[0], mean[1], mean[2]));
    out
}

/// ROUGE recall of each summary against its document's reference, sorted
/// by id, and the corpus mean.
pub fn evaluate(summaries: &Path, corpus: &Path, cfg: &RunConfig) -> CliResult<(Vec<EvalRow>, [f64; 3])> {
    if !check_artifact(summaries, cfg, "summaries")? {
        log::warn!("{} has no config sidecar; skipping the hash check", summaries.display());
    }
    let refs: HashMap<String, String> = read_documents(corpus)?
        .into_iter()
        .map(|d| (d.id, d.reference_summary))
        .collect();
    let text = read_text(summaries)?;
    let mut inputs = Vec::new();
    let mut seen = HashSet::new();
    for (no, line) in jsonl_lines(&text) {
        let rec: SummaryInput = serde_json::from_str(line)
            .map_err(|e| CliError::contract(format!("{}: line {no}: {e}", summaries.display())))?;
        let candidate = match (rec.sentences, rec.summary) {
            (Some(s), _) => s.join(" "),
            (None, Some(s)) => s,
            (None, None) => {
                return Err(CliError::contract(format!(
                    "{}: line {no}: needs `sentences` or `summary`",
                    summaries.display()
                )))
            }
        };
        if !seen.insert(rec.id.clone()) {
            return Err(CliError::contract(format!("{}: line {no}: repeated id `{}`", summaries.display(), rec.id)));
        }
        let reference = refs
            .get(&rec.id)
            .ok_or_else(|| CliError::contract(format!("summary `{}` has no document in {}", rec.id, corpus.display())))?;
        inputs.push((rec.id, candidate, reference.clone()));
    }
    let mut rows: Vec<EvalRow> = inputs
        .par_iter()
        .map(|(id, cand, reference)| EvalRow {
            id: id.clone(),
            recall: recall_triple(cand, reference),
        })
        .collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let n = rows.len().max(1) as f64;
    let mut mean = [0.0; 3];
    for r in &rows {
        mean.iter_mut().zip(r.recall).for_each(|(m, v)| *m += v / n);
    }
    Ok((rows, mean))
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<ScalingRow>,
    pub ratios: Vec<DoublingRatio>,
    pub tsv: String,
}

pub fn bench(scaling: &ScalingConfig, out: Option<&Path>, cfg: &RunConfig) -> CliResult<BenchReport> {
    let rows = scaling_bench(scaling)?;
    let tsv = scaling_tsv(&rows);
    if let Some(p) = out {
        write_artifact(p, &tsv, cfg, "bench")?;
    }
    Ok(BenchReport {
        ratios: doubling_ratios(&rows),
        rows,
        tsv,
    })
}

/// Writes a planted-signal corpus and its true labels.
pub fn synth(corpus_out: &Path, labels_out: &Path, planted: &PlantedConfig, cfg: &RunConfig) -> CliResult<usize> {
    if planted.planted_min > planted.planted_max || planted.sections == 0 || planted.sentences == 0 {
        return Err(CliError::contract("planted corpus needs sentences, sections and planted_min <= planted_max"));
    }
    let corpus = planted_corpus(planted);
    let body: String = corpus.iter().map(|p| p.document.to_json_line() + "\n").collect();
    let labels: Vec<LabelRecord> = corpus
        .iter()
        .map(|p| LabelRecord {
            id: p.document.id.clone(),
            labels: p.labels.clone(),
        })
        .collect();
    write_artifact(corpus_out, &body, cfg, "synth")?;
    write_artifact(labels_out, &to_jsonl(&labels), cfg, "synth")?;
    Ok(corpus.len())
}
