//! Document model and JSONL ingestion.
//!
//! Input lines look like
//! `{"id": str, "reference_summary": str, "sections": [{"title": str, "sentences": [str, ...]}, ...]}`.
//! Sentences arrive pre-split; section titles are not treated as sentences.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_SENTENCES: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
    pub char_length: usize,
    pub doc_position: usize,
    pub section_index: usize,
}

impl Sentence {
    pub fn new(text: &str, doc_position: usize, section_index: usize) -> Self {
        Self {
            text: text.to_string(),
            tokens: tokenize(text),
            char_length: text.chars().count(),
            doc_position,
            section_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub index: usize,
    pub title: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub sections: Vec<Section>,
    pub reference_summary: String,
    pub n_sentences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub document: Document,
    pub labels: Vec<u8>,
}

impl LabeledDocument {
    pub fn new(document: Document, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != document.n_sentences {
            return Err(Error::arg(format!(
                "document `{}` has {} sentences but {} labels",
                document.id,
                document.n_sentences,
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::arg(format!("document `{}` has a non-binary label", document.id)));
        }
        Ok(Self { document, labels })
    }
}

/// Lowercases, replaces every non-alphanumeric character with a space and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[derive(Serialize, Deserialize)]
struct RawSection {
    title: String,
    sentences: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawDocument {
    id: String,
    reference_summary: String,
    sections: Vec<RawSection>,
}

impl Document {
    /// Builds a document from `(title, sentences)` pairs, assigning positions
    /// in reading order.
    pub fn from_sections<S: AsRef<str>>(
        id: &str,
        reference_summary: &str,
        sections: &[(S, Vec<S>)],
    ) -> Self {
        let mut pos = 0;
        let sections = sections
            .iter()
            .enumerate()
            .map(|(index, (title, sents))| Section {
                index,
                title: title.as_ref().to_string(),
                sentences: sents
                    .iter()
                    .map(|s| {
                        pos += 1;
                        Sentence::new(s.as_ref(), pos - 1, index)
                    })
                    .collect(),
            })
            .collect();
        Self {
            id: id.to_string(),
            sections,
            reference_summary: reference_summary.to_string(),
            n_sentences: pos,
        }
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sections.iter().flat_map(|s| s.sentences.iter())
    }

    pub fn sentence(&self, position: usize) -> Option<&Sentence> {
        self.sentences().nth(position)
    }

    pub fn section_count(&self) -> usize {
        self.sections.len()
    }

    /// Drops sentences past `max_sentences` (and any sections left empty).
    /// Returns whether anything was removed.
    pub fn truncate(&mut self, max_sentences: usize) -> bool {
        if self.n_sentences <= max_sentences {
            return false;
        }
        let mut kept = 0;
        for sec in &mut self.sections {
            let room = max_sentences - kept;
            sec.sentences.truncate(room);
            kept += sec.sentences.len();
        }
        self.sections.retain(|s| !s.sentences.is_empty());
        self.n_sentences = kept;
        true
    }

    pub fn to_json_line(&self) -> String {
        let raw = RawDocument {
            id: self.id.clone(),
            reference_summary: self.reference_summary.clone(),
            sections: self
                .sections
                .iter()
                .map(|s| RawSection {
                    title: s.title.clone(),
                    sentences: s.sentences.iter().map(|x| x.text.clone()).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("document serializes")
    }
}

/// Parses one JSONL corpus line. `line_no` is 1-based and only used for
/// error messages.
pub fn parse_document(line: &str, line_no: usize) -> Result<Document> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let schema = |field: &str| Error::Schema {
        line: line_no,
        field: field.to_string(),
    };
    let obj = value.as_object().ok_or_else(|| schema("<root object>"))?;
    let id = obj.get("id").and_then(Value::as_str).ok_or_else(|| schema("id"))?;
    let reference = obj
        .get("reference_summary")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("reference_summary"))?;
    let raw_sections = obj
        .get("sections")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("sections"))?;
    if raw_sections.is_empty() {
        return Err(schema("sections"));
    }

    let mut sections: Vec<(String, Vec<String>)> = Vec::with_capacity(raw_sections.len());
    for (i, s) in raw_sections.iter().enumerate() {
        let title = s
            .get("title")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(&format!("sections[{i}].title")))?;
        let sents = s
            .get("sentences")
            .and_then(Value::as_array)
            .ok_or_else(|| schema(&format!("sections[{i}].sentences")))?;
        let sents = sents
            .iter()
            .enumerate()
            .map(|(j, v)| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| schema(&format!("sections[{i}].sentences[{j}]")))
            })
            .collect::<Result<Vec<_>>>()?;
        sections.push((title.to_string(), sents));
    }
    Ok(Document::from_sections(id, reference, &sections))
}

/// Every invariant violation in `doc`; empty when the document is valid.
pub fn validate(doc: &Document) -> Vec<String> {
    let mut out = Vec::new();
    if doc.sections.is_empty() {
        out.push("document has no sections".to_string());
    }
    let total: usize = doc.sections.iter().map(|s| s.sentences.len()).sum();
    if total == 0 {
        out.push("document has 0 sentences".to_string());
    }
    if total != doc.n_sentences {
        out.push(format!("n_sentences is {} but sections hold {total}", doc.n_sentences));
    }
    let mut expected_pos = 0;
    for (i, sec) in doc.sections.iter().enumerate() {
        if sec.index != i {
            out.push(format!("section at slot {i} has index {}", sec.index));
        }
        for s in &sec.sentences {
            if s.section_index != sec.index {
                out.push(format!(
                    "sentence {} has section_index {} inside section {}",
                    s.doc_position, s.section_index, sec.index
                ));
            }
            if s.doc_position != expected_pos {
                out.push(format!(
                    "sentence expected at position {expected_pos} has doc_position {}",
                    s.doc_position
                ));
            }
            if s.tokens.is_empty() {
                out.push(format!("sentence {} has no tokens", s.doc_position));
            }
            if s.char_length != s.text.chars().count() {
                out.push(format!("sentence {} has a stale char_length", s.doc_position));
            }
            expected_pos += 1;
        }
    }
    out
}

/// One line of a labels file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub labels: Vec<u8>,
}
