//! Generated corpora with a planted extraction signal.
//!
//! Every document has filler sentences drawn from a fixed pseudo-word
//! vocabulary plus a handful of planted sentences that also contain
//! [`PLANTED_MARKER`]. The reference summary is the planted sentences'
//! text, and their labels are 1.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;

pub const PLANTED_MARKER: &str = "zorblax";

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub docs: usize,
    pub sentences: usize,
    pub sections: usize,
    pub planted_min: usize,
    pub planted_max: usize,
    pub vocabulary: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            docs: 200,
            sentences: 40,
            sections: 4,
            planted_min: 4,
            planted_max: 8,
            vocabulary: 400,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDoc {
    pub document: Document,
    pub labels: Vec<u8>,
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Deterministic pronounceable word for index `i`.
fn pseudo_word(mut i: usize) -> String {
    let mut w = String::new();
    for _ in 0..3 {
        w.push_str(ONSETS[i % ONSETS.len()]);
        i /= ONSETS.len();
        w.push_str(NUCLEI[i % NUCLEI.len()]);
        i /= NUCLEI.len();
    }
    w
}

fn filler_sentence(rng: &mut ChaCha8Rng, vocab: &[String]) -> Vec<String> {
    let len = rng.gen_range(6..=11);
    (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect()
}

fn capitalize(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

pub fn planted_corpus(cfg: &PlantedConfig) -> Vec<PlantedDoc> {
    let vocab: Vec<String> = (0..cfg.vocabulary).map(pseudo_word).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_section = cfg.sentences.div_ceil(cfg.sections);
    (0..cfg.docs)
        .map(|d| {
            let k = rng.gen_range(cfg.planted_min..=cfg.planted_max).min(cfg.sentences);
            let planted = sample(&mut rng, cfg.sentences, k).into_vec();
            let mut labels = vec![0u8; cfg.sentences];
            planted.iter().for_each(|&i| labels[i] = 1);

            let texts: Vec<String> = (0..cfg.sentences)
                .map(|i| {
                    let mut words = filler_sentence(&mut rng, &vocab);
                    if labels[i] == 1 {
                        let at = rng.gen_range(0..=words.len());
                        words.insert(at, PLANTED_MARKER.to_string());
                    }
                    capitalize(&words)
                })
                .collect();
            let reference = texts
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == 1)
                .map(|(t, _)| t.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let sections: Vec<(String, Vec<String>)> = texts
                .chunks(per_section)
                .enumerate()
                .map(|(s, chunk)| (format!("Section {}", s + 1), chunk.to_vec()))
                .collect();
            PlantedDoc {
                document: Document::from_sections(&format!("planted-{}-{d:04}", cfg.seed), &reference, &sections),
                labels,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate;

    #[test]
    fn shape_and_signal() {
        let cfg = PlantedConfig {
            docs: 20,
            ..PlantedConfig::default()
        };
        let corpus = planted_corpus(&cfg);
        assert_eq!(corpus.len(), 20);
        for pd in &corpus {
            let doc = &pd.document;
            assert!(validate(doc).is_empty());
            assert_eq!(doc.n_sentences, 40);
            assert_eq!(doc.section_count(), 4);
            let k = pd.labels.iter().filter(|&&l| l == 1).count();
            assert!((4..=8).contains(&k));
            for (s, &l) in doc.sentences().zip(&pd.labels) {
                assert_eq!(s.tokens.iter().any(|t| t == PLANTED_MARKER), l == 1);
            }
        }
        let again = planted_corpus(&cfg);
        assert_eq!(again[3].document, corpus[3].document);
    }

    #[test]
    fn vocabulary_is_distinct() {
        let words: std::collections::HashSet<String> = (0..400).map(pseudo_word).collect();
        assert_eq!(words.len(), 400);
        assert!(!words.contains(PLANTED_MARKER));
    }
}
