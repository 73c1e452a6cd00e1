//! Sentence vectors and the four-way sentence embedding
//! (semantic + position + segment + section).
//!
//! The semantic component comes from a [`SentenceEncoder`]. Composition
//! happens at sentence granularity: each component contributes one
//! `d`-vector per sentence.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

pub const DEFAULT_MAX_CHUNK_TOKENS: usize = 3072;
pub const DEFAULT_S_MAX: usize = 32;

/// Maps tokenized sentences to one vector each.
pub trait SentenceEncoder: Sync {
    fn dim(&self) -> usize;

    /// `[sentences.len() × dim]` matrix, one row per input sentence.
    fn encode(&self, sentences: &[&[String]]) -> Result<Tensor>;
}

/// Deterministic stand-in for a pretrained encoder: each token gets a
/// pseudo-random vector derived from `(seed, token)`, and a sentence is the
/// mean of its token vectors.
///
/// With a marker set, the last coordinate is reserved for it: the marker
/// token is the scaled unit vector on that axis and every other token has a
/// zero there.
#[derive(Debug, Clone)]
pub struct StubEncoder {
    seed: u64,
    dim: usize,
    marker: Option<String>,
}

impl StubEncoder {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            marker: None,
        }
    }

    pub fn with_marker(mut self, token: &str) -> Self {
        self.marker = Some(token.to_string());
        self
    }

    pub fn marker(&self) -> Option<&str> {
        self.marker.as_deref()
    }

    /// Entries uniform in `[-1, 1)`, except on the marker axis.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let last = self.dim.saturating_sub(1);
        if self.marker.as_deref() == Some(token) {
            // same expected norm as a random token vector
            let mut v = vec![0.0; self.dim];
            if self.dim > 0 {
                v[last] = (self.dim as f64 / 3.0).sqrt();
            }
            return v;
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if self.marker.is_some() && self.dim > 0 {
            v[last] = 0.0;
        }
        v
    }
}

impl SentenceEncoder for StubEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentences: &[&[String]]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(sentences.len() * self.dim);
        for tokens in sentences {
            let mut acc = vec![0.0; self.dim];
            for t in tokens.iter() {
                for (a, v) in acc.iter_mut().zip(self.token_vector(t)) {
                    *a += v;
                }
            }
            if !tokens.is_empty() {
                let k = tokens.len() as f64;
                acc.iter_mut().for_each(|a| *a /= k);
            }
            out.extend(acc);
        }
        Tensor::new(&[sentences.len(), self.dim], out)
    }
}

/// Precomputed sentence vectors keyed by the sentence's tokens joined with
/// single spaces. Lets vectors from an external model be fed in.
#[derive(Debug, Clone)]
pub struct LookupEncoder {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct VectorRecord {
    text: String,
    vector: Vec<f64>,
}

impl LookupEncoder {
    /// Reads JSONL lines `{"text": str, "vector": [f64, ...]}`.
    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: VectorRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let d = *dim.get_or_insert(rec.vector.len());
            if rec.vector.len() != d {
                return Err(Error::Encoder(format!(
                    "line {}: vector has {} entries, expected {d}",
                    i + 1,
                    rec.vector.len()
                )));
            }
            vectors.insert(crate::corpus::tokenize(&rec.text).join(" "), rec.vector);
        }
        let dim = dim.ok_or_else(|| Error::Encoder("vector file is empty".into()))?;
        Ok(Self { dim, vectors })
    }
}

impl SentenceEncoder for LookupEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentences: &[&[String]]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(sentences.len() * self.dim);
        for tokens in sentences {
            let key = tokens.join(" ");
            let v = self
                .vectors
                .get(&key)
                .ok_or_else(|| Error::Encoder(format!("no vector for sentence `{key}`")))?;
            out.extend_from_slice(v);
        }
        Tensor::new(&[sentences.len(), self.dim], out)
    }
}

/// Sinusoidal position code: entry `2i` is `sin(pos / 10000^(2i/d))`,
/// entry `2i+1` the matching cosine.
pub fn sinusoid_position(pos: usize, d: usize) -> Result<Vec<f64>> {
    if !d.is_multiple_of(2) {
        return Err(Error::arg(format!("sinusoid dimension must be even, got {d}")));
    }
    let mut out = vec![0.0; d];
    for i in 0..d / 2 {
        let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

/// Runs `encoder` section by section, packing consecutive sentences into
/// chunks of at most `max_chunk_tokens` tokens, and returns the rows in
/// document order.
pub fn encode_sentences(
    doc: &Document,
    encoder: &dyn SentenceEncoder,
    max_chunk_tokens: usize,
) -> Result<Tensor> {
    let d = encoder.dim();
    let mut rows = Vec::with_capacity(doc.n_sentences * d);
    for section in &doc.sections {
        let mut chunk: Vec<&[String]> = Vec::new();
        let mut chunk_tokens = 0;
        for s in &section.sentences {
            let len = s.tokens.len();
            if len > max_chunk_tokens {
                return Err(Error::arg(format!(
                    "sentence {} of document `{}` has {len} tokens, over the chunk budget of {max_chunk_tokens}",
                    s.doc_position, doc.id
                )));
            }
            if chunk_tokens + len > max_chunk_tokens && !chunk.is_empty() {
                rows.extend(encoder.encode(&chunk)?.into_data());
                chunk.clear();
                chunk_tokens = 0;
            }
            chunk.push(&s.tokens);
            chunk_tokens += len;
        }
        if !chunk.is_empty() {
            rows.extend(encoder.encode(&chunk)?.into_data());
        }
    }
    Tensor::new(&[doc.n_sentences, d], rows)
}

/// `[n × d]` matrix of sinusoid position codes for positions `0..n`.
pub fn position_matrix(n: usize, d: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend(sinusoid_position(i, d)?);
    }
    Tensor::new(&[n, d], data)
}

/// Row `i` = `semantic[i] + position(i) + segment_table[i mod 2] +
/// section_table[min(section_i, S_max - 1)]`.
pub fn compose_embeddings(
    graph: &mut Graph,
    semantic: Var,
    doc: &Document,
    segment_table: Var,
    section_table: Var,
) -> Result<Var> {
    let (n, d) = (graph.value(semantic).rows(), graph.value(semantic).cols());
    if n != doc.n_sentences {
        return Err(Error::dim("compose_embeddings", graph.shape(semantic), &[doc.n_sentences, d]));
    }
    for table in [segment_table, section_table] {
        if graph.value(table).cols() != d {
            return Err(Error::dim("compose_embeddings", graph.shape(semantic), graph.shape(table)));
        }
    }
    let s_max = graph.value(section_table).rows();
    let parity: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let sections: Vec<usize> = doc.sentences().map(|s| s.section_index.min(s_max - 1)).collect();

    let position = graph.constant(position_matrix(n, d)?);
    let segment = graph.gather_rows(segment_table, &parity);
    let section = graph.gather_rows(section_table, &sections);
    graph.add_all(&[semantic, position, segment, section])
}

/// [`compose_embeddings`] on plain tensors.
pub fn compose_embeddings_plain(
    semantic: &Tensor,
    doc: &Document,
    segment_table: &Tensor,
    section_table: &Tensor,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let s = g.constant(semantic.clone());
    let seg = g.constant(segment_table.clone());
    let sec = g.constant(section_table.clone());
    let out = compose_embeddings(&mut g, s, doc, seg, sec)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check_many;
    use proptest::prelude::*;

    fn two_by_three() -> Document {
        Document::from_sections(
            "d",
            "",
            &[
                ("a", vec!["alpha beta gamma", "delta", "epsilon zeta"]),
                ("b", vec!["eta theta", "iota kappa lambda mu", "nu"]),
            ],
        )
    }

    #[test]
    fn sinusoid_examples() {
        let p0 = sinusoid_position(0, 6).unwrap();
        assert_eq!(p0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let p1 = sinusoid_position(1, 4).unwrap();
        assert!((p1[0] - 0.841_470_984_807_896_5).abs() < 1e-15);
        for pos in [0, 3, 77, 499] {
            assert!(sinusoid_position(pos, 16).unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(sinusoid_position(1, 5).is_err());
    }

    #[test]
    fn stub_is_deterministic_and_seeded() {
        let a = StubEncoder::new(7, 8);
        assert_eq!(a.token_vector("cell"), a.token_vector("cell"));
        assert_ne!(a.token_vector("cell"), StubEncoder::new(8, 8).token_vector("cell"));
        assert_ne!(a.token_vector("cell"), a.token_vector("cells"));
    }

    #[test]
    fn marker_owns_the_last_axis() {
        let enc = StubEncoder::new(7, 6).with_marker("zz");
        assert_eq!(enc.token_vector("zz"), vec![0.0, 0.0, 0.0, 0.0, 0.0, 2f64.sqrt()]);
        let plain = StubEncoder::new(7, 6).token_vector("cell");
        let marked = enc.token_vector("cell");
        assert_eq!(marked[..5], plain[..5]);
        assert_eq!(marked[5], 0.0);
    }

    #[test]
    fn chunking_does_not_change_stub_output() {
        let doc = two_by_three();
        let enc = StubEncoder::new(1, 8);
        let whole = encode_sentences(&doc, &enc, DEFAULT_MAX_CHUNK_TOKENS).unwrap();
        let tight = encode_sentences(&doc, &enc, 4).unwrap();
        assert_eq!(whole.shape(), &[6, 8]);
        assert_eq!(whole, tight);
        let single = enc.encode(&[&doc.sentence(4).unwrap().tokens]).unwrap();
        assert_eq!(whole.row(4), single.row(0));
    }

    #[test]
    fn oversized_sentence_is_rejected() {
        let long = (0..12).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let doc = Document::from_sections("d", "", &[("a", vec![long.as_str()])]);
        let err = encode_sentences(&doc, &StubEncoder::new(1, 4), 10).unwrap_err();
        assert!(err.to_string().contains("sentence 0"));
    }

    #[test]
    fn compose_with_zero_inputs_is_position_code() {
        let doc = two_by_three();
        let d = 8;
        let out = compose_embeddings_plain(
            &Tensor::zeros(&[6, d]),
            &doc,
            &Tensor::zeros(&[2, d]),
            &Tensor::zeros(&[DEFAULT_S_MAX, d]),
        )
        .unwrap();
        for i in 0..6 {
            assert_eq!(out.row(i), sinusoid_position(i, d).unwrap().as_slice());
        }
    }

    #[test]
    fn compose_components() {
        let doc = two_by_three();
        let d = 4;
        let seg = Tensor::from_rows(&[vec![1.0; 4], vec![-2.0; 4]]).unwrap();
        let mut sec = Tensor::zeros(&[3, d]);
        sec.row_mut(0).fill(10.0);
        sec.row_mut(1).fill(20.0);
        let zero = Tensor::zeros(&[6, d]);
        let out = compose_embeddings_plain(&zero, &doc, &seg, &sec).unwrap();
        let base = compose_embeddings_plain(&zero, &doc, &seg, &Tensor::zeros(&[3, d])).unwrap();
        // same section: difference independent of the section table
        for j in 0..d {
            assert!((out.get(0, j) - out.get(1, j) - (base.get(0, j) - base.get(1, j))).abs() < 1e-12);
        }
        // even positions share a segment row
        let pos = position_matrix(6, d).unwrap();
        for j in 0..d {
            assert!((out.get(2, j) - pos.get(2, j) - 10.0 - 1.0).abs() < 1e-12);
            assert!((out.get(3, j) - pos.get(3, j) - 20.0 + 2.0).abs() < 1e-12);
        }
        assert!(compose_embeddings_plain(&Tensor::zeros(&[5, d]), &doc, &seg, &sec).is_err());
    }

    #[test]
    fn compose_gradient() {
        let doc = two_by_three();
        let enc = StubEncoder::new(3, 6);
        let sem = encode_sentences(&doc, &enc, 100).unwrap();
        let seg = enc.encode(&[&["x".to_string()], &["y".to_string()]]).unwrap();
        let sec = enc.encode(&[&["p".to_string()], &["q".to_string()]]).unwrap();
        let err = grad_check_many(
            |g, v| {
                let e = compose_embeddings(g, v[0], &doc, v[1], v[2])?;
                let t = g.tanh(e);
                let sq = g.mul(t, t)?;
                Ok(g.sum(sq))
            },
            &[sem, seg, sec],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    proptest! {
        #[test]
        fn compose_is_additive_in_semantic(seed in any::<u64>()) {
            let doc = two_by_three();
            let enc = StubEncoder::new(seed, 4);
            let sem = encode_sentences(&doc, &enc, 100).unwrap();
            let seg = Tensor::full(&[2, 4], 0.5);
            let sec = Tensor::full(&[4, 4], -0.25);
            let once = compose_embeddings_plain(&sem, &doc, &seg, &sec).unwrap();
            let doubled = compose_embeddings_plain(&sem.map(|v| 2.0 * v), &doc, &seg, &sec).unwrap();
            for (i, (a, b)) in once.data().iter().zip(doubled.data()).enumerate() {
                prop_assert!((b - a - sem.data()[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn stub_rows_follow_permutation(seed in any::<u64>(), shift in 0usize..6) {
            let doc = two_by_three();
            let enc = StubEncoder::new(seed, 4);
            let toks: Vec<&[String]> = doc.sentences().map(|s| s.tokens.as_slice()).collect();
            let mut perm = toks.clone();
            perm.rotate_left(shift);
            let a = enc.encode(&toks).unwrap();
            let b = enc.encode(&perm).unwrap();
            for i in 0..6 {
                prop_assert_eq!(b.row(i), a.row((i + shift) % 6));
            }
        }

        #[test]
        fn any_chunk_budget_gives_identical_rows(budget in 4usize..20) {
            let doc = two_by_three();
            let enc = StubEncoder::new(5, 4);
            prop_assert_eq!(
                encode_sentences(&doc, &enc, budget).unwrap(),
                encode_sentences(&doc, &enc, 1000).unwrap()
            );
        }
    }
}
