//! Sentence scoring and summary selection.

use std::collections::HashMap;

use rand::Rng;

use crate::corpus::{Document, Sentence};
use crate::error::{Error, Result};
use crate::numerics::{insert_linear, Bound, Graph, ParamStore, Tensor, Var};

pub const DEFAULT_BUDGET_RATIO: f64 = 0.20;

/// How the six `[n × d]` inputs are merged before the scoring linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    #[default]
    Sum,
    Concat,
}

impl std::str::FromStr for Combine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self::Sum),
            "concat" => Ok(Self::Concat),
            other => Err(Error::arg(format!("unknown combine mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Combine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sum => "sum",
            Self::Concat => "concat",
        })
    }
}

impl Combine {
    pub fn input_width(self, d: usize) -> usize {
        match self {
            Self::Sum => d,
            Self::Concat => 6 * d,
        }
    }
}

/// Registers `scorer.weight: [1 × width]` and `scorer.bias: [1]`.
pub fn insert_scorer_params<R: Rng>(store: &mut ParamStore, d: usize, combine: Combine, rng: &mut R) {
    insert_linear(store, "scorer", combine.input_width(d), 1, rng);
}

/// Pre-squash scores `[n × 1]`: the sentence representation and the five
/// features merged per `combine`, then `Linear(· → 1)`.
pub fn score_logits(g: &mut Graph, params: &Bound, parts: &[Var; 6], combine: Combine) -> Result<Var> {
    let first = g.shape(parts[0]).to_vec();
    for &p in &parts[1..] {
        if g.shape(p) != first.as_slice() {
            return Err(Error::dim("predict_scores", &first, g.shape(p)));
        }
    }
    let merged = match combine {
        Combine::Sum => g.add_all(parts)?,
        Combine::Concat => g.concat_cols(parts)?,
    };
    params.linear("scorer")?.forward(g, merged)
}

/// Per-sentence probabilities `sigmoid(Linear(combine(parts)))` on plain
/// tensors.
pub fn predict_scores(parts: &[&Tensor; 6], weight: &Tensor, bias: &Tensor, combine: Combine) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let vars = parts.map(|t| g.constant(t.clone()));
    let (w, b) = (g.constant(weight.clone()), g.constant(bias.clone()));
    let params = Bound::from_vars(["scorer.weight", "scorer.bias"], &[w, b]);
    let logits = score_logits(&mut g, &params, &vars, combine)?;
    let p = g.sigmoid(logits);
    Ok(g.value(p).data().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub budget_ratio: f64,
    /// Skip a candidate sharing more than this many trigrams with the
    /// accepted sentences; `None` disables blocking.
    pub trigram_threshold: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            budget_ratio: DEFAULT_BUDGET_RATIO,
            trigram_threshold: None,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_ratio > 0.0 && self.budget_ratio <= 1.0) {
            return Err(Error::arg(format!("budget ratio {} outside (0, 1]", self.budget_ratio)));
        }
        Ok(())
    }
}

/// `ceil(ratio · n)`, tolerant of representation error so that
/// `0.2 · 10` gives 2 rather than 3.
pub fn sentence_budget(ratio: f64, n: usize) -> usize {
    (((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

type TrigramCounts<'a> = HashMap<&'a [String], usize>;

fn trigram_counts(tokens: &[String]) -> TrigramCounts<'_> {
    let mut out = HashMap::new();
    for t in tokens.windows(3) {
        *out.entry(t).or_insert(0) += 1;
    }
    out
}

fn shared_with(candidate: &TrigramCounts<'_>, accepted: &TrigramCounts<'_>) -> usize {
    candidate
        .iter()
        .map(|(t, &c)| c.min(accepted.get(t).copied().unwrap_or(0)))
        .sum()
}

/// Size of the multiset intersection between the candidate's trigrams and
/// the union of the selected sentences' trigrams.
pub fn shared_trigrams(candidate: &Sentence, selected: &[&Sentence]) -> usize {
    let mut accepted = HashMap::new();
    for s in selected {
        for (t, c) in trigram_counts(&s.tokens) {
            *accepted.entry(t).or_insert(0) += c;
        }
    }
    shared_with(&trigram_counts(&candidate.tokens), &accepted)
}

/// Visits sentences by descending score (earlier position first on ties),
/// skipping blocked candidates, until the budget is filled. Returns the
/// accepted positions in document order.
pub fn select_sentences(doc: &Document, scores: &[f64], cfg: &SelectionConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if scores.len() != doc.n_sentences {
        return Err(Error::arg(format!(
            "{} scores for document `{}` of {} sentences",
            scores.len(),
            doc.id,
            doc.n_sentences
        )));
    }
    let sentences: Vec<&Sentence> = doc.sentences().collect();
    let budget = sentence_budget(cfg.budget_ratio, doc.n_sentences);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut accepted = Vec::with_capacity(budget);
    let mut accepted_trigrams: TrigramCounts<'_> = HashMap::new();
    for i in order {
        if accepted.len() == budget {
            break;
        }
        let own = trigram_counts(&sentences[i].tokens);
        if let Some(limit) = cfg.trigram_threshold {
            if shared_with(&own, &accepted_trigrams) > limit {
                continue;
            }
        }
        for (t, c) in own {
            *accepted_trigrams.entry(t).or_insert(0) += c;
        }
        accepted.push(i);
    }
    accepted.sort_unstable();
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sentence(text: &str) -> Sentence {
        Sentence::new(text, 0, 0)
    }

    #[test]
    fn shared_trigram_examples() {
        let sel = sentence("the quick brown fox jumps");
        assert_eq!(shared_trigrams(&sentence("the quick brown dog"), &[&sel]), 1);
        assert_eq!(shared_trigrams(&sentence("the quick brown dog"), &[]), 0);
        assert_eq!(shared_trigrams(&sentence("the quick"), &[&sel]), 0);
        // repeats are clipped by the selected side
        let rep = sentence("a b c a b c");
        assert_eq!(shared_trigrams(&rep, &[&sentence("a b c")]), 1);
        assert_eq!(shared_trigrams(&rep, &[&sentence("a b c"), &sentence("x a b c")]), 2);
    }

    #[test]
    fn budget_arithmetic() {
        assert_eq!(sentence_budget(0.2, 10), 2);
        assert_eq!(sentence_budget(0.2, 11), 3);
        assert_eq!(sentence_budget(0.2, 1), 1);
        assert_eq!(sentence_budget(1.0, 7), 7);
        assert_eq!(sentence_budget(0.3, 10), 3);
    }

    fn doc_of(sents: &[&str]) -> Document {
        Document::from_sections("t", "", &[("s", sents.to_vec())])
    }

    #[test]
    fn selection_examples() {
        let d = doc_of(&["s0 a", "s1 b", "s2 c", "s3 d", "s4 e", "s5 f", "s6 g", "s7 h", "s8 i", "s9 j"]);
        let scores = [0.1, 0.9, 0.2, 0.3, 0.8, 0.0, 0.5, 0.4, 0.6, 0.7];
        let picked = select_sentences(&d, &scores, &SelectionConfig::default()).unwrap();
        assert_eq!(picked, vec![1, 4]);

        let dup = doc_of(&["the cat sat down", "the cat sat down", "other words here"]);
        let cfg = SelectionConfig {
            budget_ratio: 0.66,
            trigram_threshold: Some(0),
        };
        let picked = select_sentences(&dup, &[0.9, 0.8, 0.1], &cfg).unwrap();
        assert_eq!(picked, vec![0, 2]);
        let open = SelectionConfig { trigram_threshold: None, ..cfg };
        assert_eq!(select_sentences(&dup, &[0.9, 0.8, 0.1], &open).unwrap(), vec![0, 1]);
        // ties go to the earlier sentence
        assert_eq!(select_sentences(&dup, &[0.5, 0.5, 0.5], &open).unwrap(), vec![0, 1]);
        assert!(select_sentences(&dup, &[0.5], &open).is_err());
    }

    #[test]
    fn predict_scores_examples() {
        let z = Tensor::zeros(&[3, 2]);
        let parts = [&z, &z, &z, &z, &z, &z];
        let p = predict_scores(&parts, &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1]), Combine::Sum).unwrap();
        assert_eq!(p, vec![0.5; 3]);

        // n=4 by hand: rows of the summed input are [i, 1], weight [0.5, -1], bias 0.25
        let base = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]]).unwrap();
        let zero = Tensor::zeros(&[4, 2]);
        let parts = [&base, &zero, &zero, &zero, &zero, &zero];
        let w = Tensor::from_rows(&[vec![0.5, -1.0]]).unwrap();
        let p = predict_scores(&parts, &w, &Tensor::vector(vec![0.25]), Combine::Sum).unwrap();
        for (i, pi) in p.iter().enumerate() {
            let s = 0.5 * i as f64 - 1.0 + 0.25;
            assert_abs_diff_eq!(*pi, 1.0 / (1.0 + (-s).exp()), epsilon = 1e-15);
        }

        let wide = Tensor::full(&[1, 12], 0.1);
        let p = predict_scores(&[&base; 6], &wide, &Tensor::zeros(&[1]), Combine::Concat).unwrap();
        assert_eq!(p.len(), 4);
        let bad = Tensor::zeros(&[4, 3]);
        assert!(predict_scores(&[&base, &bad, &base, &base, &base, &base], &w, &Tensor::zeros(&[1]), Combine::Sum).is_err());
    }

    fn arb_doc() -> impl Strategy<Value = (Document, Vec<f64>)> {
        let word = prop::sample::select(vec!["a", "b", "c", "d", "e"]);
        let sent = prop::collection::vec(word, 1..7).prop_map(|w| w.join(" "));
        prop::collection::vec((sent, 0.0f64..1.0), 1..20).prop_map(|rows| {
            let texts: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
            let d = Document::from_sections("p", "", &[("s".to_string(), texts)]);
            (d, rows.into_iter().map(|r| r.1).collect())
        })
    }

    proptest! {
        #[test]
        fn selection_invariants((doc, scores) in arb_doc(), ratio in 0.05f64..=1.0, bump in 0usize..20) {
            let cfg = SelectionConfig { budget_ratio: ratio, trigram_threshold: None };
            let k = sentence_budget(ratio, doc.n_sentences);
            let picked = select_sentences(&doc, &scores, &cfg).unwrap();
            prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(picked.len(), k);

            let i = bump % doc.n_sentences;
            if picked.contains(&i) {
                let mut raised = scores.clone();
                raised[i] += 0.5;
                prop_assert!(select_sentences(&doc, &raised, &cfg).unwrap().contains(&i));
            }

            let strict = SelectionConfig { budget_ratio: ratio, trigram_threshold: Some(0) };
            let blocked = select_sentences(&doc, &scores, &strict).unwrap();
            prop_assert!(blocked.len() <= k);
            let sents: Vec<&Sentence> = doc.sentences().collect();
            for (a, &x) in blocked.iter().enumerate() {
                for &y in &blocked[a + 1..] {
                    prop_assert_eq!(shared_trigrams(sents[x], &[sents[y]]), 0);
                }
            }
        }
    }
}
