//! Reading corpora and writing artifacts with their config sidecar.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sectsum_core::corpus::{parse_document, validate, Document, LabelRecord};

use crate::config::{check_hash, RunConfig};
use crate::error::{CliError, CliResult};

/// Contents of `<artifact>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub command: String,
    /// Hex of the model-section hash.
    pub config_hash: String,
    pub config: String,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

/// Writes `contents` to `path` and the run's config next to it.
pub fn write_artifact(path: &Path, contents: &str, cfg: &RunConfig, command: &str) -> CliResult<()> {
    write_text(path, contents)?;
    let meta = ArtifactMeta {
        command: command.to_string(),
        config_hash: format!("{:016x}", cfg.hash()),
        config: cfg.canonical(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_text(&meta_path(path), &(json + "\n"))
}

/// Checks the sidecar of `path` against `cfg` when one exists. Returns
/// whether a sidecar was found.
pub fn check_artifact(path: &Path, cfg: &RunConfig, what: &str) -> CliResult<bool> {
    let meta = meta_path(path);
    if !meta.exists() {
        return Ok(false);
    }
    let parsed: ArtifactMeta = serde_json::from_str(&read_text(&meta)?)
        .map_err(|e| CliError::contract(format!("{}: {e}", meta.display())))?;
    let found = u64::from_str_radix(&parsed.config_hash, 16)
        .map_err(|_| CliError::contract(format!("{}: bad config_hash", meta.display())))?;
    check_hash(found, &parsed.config, cfg, what)?;
    Ok(true)
}

/// Non-blank lines with their 1-based numbers.
pub fn jsonl_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses and validates one corpus line.
pub fn document_from_line(line: &str, line_no: usize) -> Result<Document, String> {
    let doc = parse_document(line, line_no).map_err(|e| e.to_string())?;
    let violations = validate(&doc);
    if !violations.is_empty() {
        return Err(format!("line {line_no}: document `{}`: {}", doc.id, violations.join("; ")));
    }
    Ok(doc)
}

/// Reads a corpus, failing on the first bad line or repeated id.
pub fn read_documents(path: &Path) -> CliResult<Vec<Document>> {
    let text = read_text(path)?;
    let mut seen = HashMap::new();
    let mut docs = Vec::new();
    for (no, line) in jsonl_lines(&text) {
        let doc = document_from_line(line, no)
            .map_err(|e| CliError::contract(format!("{}: {e}", path.display())))?;
        if let Some(first) = seen.insert(doc.id.clone(), no) {
            return Err(CliError::contract(format!(
                "{}: line {no}: id `{}` already used on line {first}",
                path.display(),
                doc.id
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_labels(path: &Path) -> CliResult<HashMap<String, Vec<u8>>> {
    let text = read_text(path)?;
    let mut out = HashMap::new();
    for (no, line) in jsonl_lines(&text) {
        let rec: LabelRecord = serde_json::from_str(line)
            .map_err(|e| CliError::contract(format!("{}: line {no}: {e}", path.display())))?;
        out.insert(rec.id, rec.labels);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}
