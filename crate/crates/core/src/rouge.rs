//! ROUGE-1/2/L, the summary-level reward, greedy oracle labels and
//! candidate sampling.
//!
//! Counts are clipped multiset counts over lowercased tokens from
//! [`tokenize`](crate::corpus::tokenize). There is no stemming and no
//! stopword removal, so scores are only comparable with each other.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tokenize, Document};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the reference was empty and the score is zero by definition.
    pub degenerate: bool,
}

impl RougeScore {
    fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        if ref_total == 0 {
            return Self {
                degenerate: true,
                ..Self::default()
            };
        }
        let precision = if cand_total == 0 {
            0.0
        } else {
            overlap as f64 / cand_total as f64
        };
        let recall = overlap as f64 / ref_total as f64;
        Self {
            precision,
            recall,
            f1: ratio(2 * overlap, cand_total + ref_total),
            degenerate: false,
        }
    }
}

/// `num / den`, or 0 when `num` is 0. F1 is taken as
/// `2·overlap / (cand_total + ref_total)`, which equals `2pr / (p + r)` but
/// rounds once.
fn ratio(num: usize, den: usize) -> f64 {
    if num == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub type NgramCounts<'a> = HashMap<&'a [String], usize>;

/// All contiguous `n`-token windows with multiplicity.
pub fn ngrams(tokens: &[String], n: usize) -> Result<NgramCounts<'_>> {
    if n == 0 {
        return Err(Error::arg("n-gram order must be at least 1"));
    }
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

fn clipped_overlap(cand: &NgramCounts<'_>, reference: &NgramCounts<'_>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Clipped overlap, candidate total and reference total of `n`-grams.
fn ngram_counts(candidate: &[String], reference: &[String], n: usize) -> Result<[usize; 3]> {
    let c = ngrams(candidate, n)?;
    let r = ngrams(reference, n)?;
    Ok([
        clipped_overlap(&c, &r),
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    ])
}

pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Result<RougeScore> {
    let [overlap, cand, reference] = ngram_counts(candidate, reference, n)?;
    Ok(RougeScore::from_counts(overlap, cand, reference))
}

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// ROUGE-1, ROUGE-2 and ROUGE-L recall of `candidate` against `reference`.
pub fn recall_triple(candidate: &str, reference: &str) -> [f64; 3] {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    [
        rouge_n(&c, &r, 1).expect("n >= 1").recall,
        rouge_n(&c, &r, 2).expect("n >= 1").recall,
        rouge_l(&c, &r).recall,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub value: f64,
    pub degenerate: bool,
}

/// Mean of the ROUGE-1 and ROUGE-2 F1 of `candidate` against `reference`.
pub fn reward(candidate: &str, reference: &str) -> Reward {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let [o1, c1, r1] = ngram_counts(&c, &r, 1).expect("n >= 1");
    let [o2, c2, r2] = ngram_counts(&c, &r, 2).expect("n >= 1");
    if r1 == 0 {
        return Reward {
            value: 0.0,
            degenerate: true,
        };
    }
    // (2·o1/s1 + 2·o2/s2) / 2 as one fraction
    let (s1, s2) = (c1 + r1, c2 + r2);
    let value = if s2 == 0 {
        ratio(o1, s1)
    } else {
        ratio(o1 * s2 + o2 * s1, s1 * s2)
    };
    Reward {
        value,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleLabels {
    pub labels: Vec<u8>,
    pub degenerate: bool,
}

/// Running clipped-overlap state for an extract whose n-grams are the
/// multiset union of its sentences' n-grams.
struct ExtractState<'a> {
    counts: [NgramCounts<'a>; 2],
    totals: [usize; 2],
    overlap: [usize; 2],
}

impl<'a> ExtractState<'a> {
    fn new() -> Self {
        Self {
            counts: [HashMap::new(), HashMap::new()],
            totals: [0; 2],
            overlap: [0; 2],
        }
    }

    /// Overlap and totals after hypothetically adding `sent`.
    fn with(&self, sent: &[NgramCounts<'a>; 2], reference: &[NgramCounts<'a>; 2]) -> ([usize; 2], [usize; 2]) {
        let mut overlap = self.overlap;
        let mut totals = self.totals;
        for k in 0..2 {
            for (g, &c) in &sent[k] {
                let have = self.counts[k].get(g).copied().unwrap_or(0);
                let cap = reference[k].get(g).copied().unwrap_or(0);
                overlap[k] += (have + c).min(cap) - have.min(cap);
                totals[k] += c;
            }
        }
        (overlap, totals)
    }

    fn add(&mut self, sent: &[NgramCounts<'a>; 2], reference: &[NgramCounts<'a>; 2]) {
        let (overlap, totals) = self.with(sent, reference);
        self.overlap = overlap;
        self.totals = totals;
        for (counts, grams) in self.counts.iter_mut().zip(sent) {
            for (g, &c) in grams {
                *counts.entry(*g).or_insert(0) += c;
            }
        }
    }
}

fn objective(overlap: [usize; 2], totals: [usize; 2], ref_totals: [usize; 2]) -> f64 {
    (0..2)
        .map(|k| RougeScore::from_counts(overlap[k], totals[k], ref_totals[k]).f1)
        .sum()
}

/// Greedy extractive labels: repeatedly add the sentence with the largest
/// gain in ROUGE-1 F1 + ROUGE-2 F1 of the running extract against the
/// reference summary, stopping at `budget` sentences or when no sentence
/// improves the objective. Ties go to the earlier sentence.
pub fn oracle_labels(doc: &Document, budget: usize) -> Result<OracleLabels> {
    if budget == 0 {
        return Err(Error::arg("oracle budget must be at least 1"));
    }
    let n = doc.n_sentences;
    let reference_tokens = tokenize(&doc.reference_summary);
    if reference_tokens.is_empty() {
        return Ok(OracleLabels {
            labels: vec![0; n],
            degenerate: true,
        });
    }
    let reference = [ngrams(&reference_tokens, 1)?, ngrams(&reference_tokens, 2)?];
    let ref_totals = [reference_tokens.len(), reference_tokens.len().saturating_sub(1)];
    let sents: Vec<[NgramCounts<'_>; 2]> = doc
        .sentences()
        .map(|s| Ok([ngrams(&s.tokens, 1)?, ngrams(&s.tokens, 2)?]))
        .collect::<Result<_>>()?;

    let mut labels = vec![0u8; n];
    let mut state = ExtractState::new();
    let mut current = 0.0;
    for _ in 0..budget.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in sents.iter().enumerate() {
            if labels[i] == 1 {
                continue;
            }
            let (overlap, totals) = state.with(s, &reference);
            let score = objective(overlap, totals, ref_totals);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        match best {
            Some((i, score)) if score > current => {
                labels[i] = 1;
                state.add(&sents[i], &reference);
                current = score;
            }
            _ => break,
        }
    }
    Ok(OracleLabels {
        labels,
        degenerate: false,
    })
}

/// Text of the sentences marked 1, in document order.
pub fn extract_text(doc: &Document, labels: &[u8]) -> String {
    doc.sentences()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(s, _)| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub labels: Vec<u8>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    /// Fewer than the requested number of distinct candidates existed.
    pub exhausted: bool,
}

/// The oracle itself followed by up to `k - 1` distinct single-swap
/// perturbations (one selected sentence exchanged for an unselected one),
/// drawn in a seeded order. Every candidate keeps the oracle's cardinality
/// and carries its [`reward`].
pub fn sample_candidates(doc: &Document, oracle: &[u8], k: usize, seed: u64) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::arg("candidate count must be at least 1"));
    }
    if oracle.len() != doc.n_sentences {
        return Err(Error::arg(format!(
            "oracle has {} labels for {} sentences",
            oracle.len(),
            doc.n_sentences
        )));
    }
    let selected: Vec<usize> = (0..oracle.len()).filter(|&i| oracle[i] == 1).collect();
    let unselected: Vec<usize> = (0..oracle.len()).filter(|&i| oracle[i] == 0).collect();
    let mut swaps: Vec<(usize, usize)> = selected
        .iter()
        .flat_map(|&s| unselected.iter().map(move |&u| (s, u)))
        .collect();
    swaps.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let score = |labels: Vec<u8>| Candidate {
        reward: reward(&extract_text(doc, &labels), &doc.reference_summary).value,
        labels,
    };
    let mut candidates = vec![score(oracle.to_vec())];
    for &(s, u) in swaps.iter().take(k - 1) {
        let mut labels = oracle.to_vec();
        labels[s] = 0;
        labels[u] = 1;
        candidates.push(score(labels));
    }
    Ok(CandidateSet {
        exhausted: candidates.len() < k,
        candidates,
    })
}
