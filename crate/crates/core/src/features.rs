//! Per-sentence feature embeddings and the document embedding.
//!
//! Every feature maps to an `[n × d]` matrix and ends in `ReLU(Linear(..))`.
//! Parameter names: `length_table`, `position_table`,
//! `feature_section_table`, `W_c`, `W_s`, `W_sents` and the linears
//! `features.{length,position,section,correlation,saliency}`.

use rand::Rng;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::numerics::{insert_linear, Bound, Graph, ParamStore, Var};

pub const DEFAULT_LENGTH_BUCKETS: usize = 100;
pub const LENGTH_BUCKET_WIDTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureConfig {
    pub d_model: usize,
    pub length_buckets: usize,
    pub position_buckets: usize,
    pub section_buckets: usize,
}

pub fn insert_feature_params<R: Rng>(store: &mut ParamStore, cfg: &FeatureConfig, rng: &mut R) {
    let d = cfg.d_model;
    store.insert_uniform("length_table", &[cfg.length_buckets, d], rng);
    store.insert_uniform("position_table", &[cfg.position_buckets, d], rng);
    store.insert_uniform("feature_section_table", &[cfg.section_buckets, d], rng);
    store.insert_uniform("W_c", &[d, d], rng);
    store.insert_uniform("W_s", &[d, d], rng);
    store.insert_uniform("W_sents", &[d, 1], rng);
    for name in ["length", "position", "section", "correlation", "saliency"] {
        insert_linear(store, &format!("features.{name}"), d, d, rng);
    }
}

/// `min(char_length / 10, buckets - 1)`.
pub fn length_bucket(char_length: usize, buckets: usize) -> usize {
    (char_length / LENGTH_BUCKET_WIDTH).min(buckets - 1)
}

fn embed_feature(g: &mut Graph, params: &Bound, table: &str, linear: &str, indices: &[usize]) -> Result<Var> {
    let table = params.get(table)?;
    let rows = g.value(table).rows();
    let clamped: Vec<usize> = indices.iter().map(|&i| i.min(rows - 1)).collect();
    let e = g.gather_rows(table, &clamped);
    let y = params.linear(linear)?.forward(g, e)?;
    Ok(g.relu(y))
}

/// One row per entry of `char_lengths`.
pub fn length_feature(g: &mut Graph, params: &Bound, char_lengths: &[usize]) -> Result<Var> {
    let table = params.get("length_table")?;
    let buckets = g.value(table).rows();
    let idx: Vec<usize> = char_lengths.iter().map(|&c| length_bucket(c, buckets)).collect();
    embed_feature(g, params, "length_table", "features.length", &idx)
}

pub fn position_feature(g: &mut Graph, params: &Bound, positions: &[usize]) -> Result<Var> {
    embed_feature(g, params, "position_table", "features.position", positions)
}

pub fn section_feature(g: &mut Graph, params: &Bound, sections: &[usize]) -> Result<Var> {
    embed_feature(g, params, "feature_section_table", "features.section", sections)
}

fn check_matrix(g: &Graph, e: Var, op: &'static str, d: usize) -> Result<(usize, usize)> {
    let shape = g.shape(e);
    if shape.len() != 2 || shape[0] == 0 || shape[1] != d {
        return Err(Error::dim(op, shape, &[shape.first().copied().unwrap_or(0), d]));
    }
    Ok((shape[0], shape[1]))
}

/// `ReLU(Linear(tanh(E·W_c·Eᵀ)·E))`.
pub fn correlation_feature(g: &mut Graph, params: &Bound, e: Var) -> Result<Var> {
    let w_c = params.get("W_c")?;
    let d = g.value(w_c).rows();
    check_matrix(g, e, "correlation_feature", d)?;
    let ew = g.matmul(e, w_c)?;
    let et = g.transpose(e);
    let scores = g.matmul(ew, et)?;
    let c = g.tanh(scores);
    let mixed = g.matmul(c, e)?;
    let y = params.linear("features.correlation")?.forward(g, mixed)?;
    Ok(g.relu(y))
}

/// `(1/n)·Σ_i softmax(E·W_sents)_i·E_i` as a `[1 × d]` matrix.
pub fn document_embedding(g: &mut Graph, e: Var, w_sents: Var) -> Result<Var> {
    let d = g.value(w_sents).rows();
    let (n, _) = check_matrix(g, e, "document_embedding", d)?;
    let logits = g.matmul(e, w_sents)?;
    let weights = g.softmax(logits, 0)?;
    let wt = g.transpose(weights);
    let pooled = g.matmul(wt, e)?;
    Ok(g.scale(pooled, 1.0 / n as f64))
}

/// `ReLU(Linear(tanh(E·W_s·E_Dᵀ) ⊙ E))`, each row scaled by its saliency.
pub fn saliency_feature(g: &mut Graph, params: &Bound, e: Var, doc_embedding: Var) -> Result<Var> {
    let w_s = params.get("W_s")?;
    let d = g.value(w_s).rows();
    check_matrix(g, e, "saliency_feature", d)?;
    let ed_shape = g.shape(doc_embedding).to_vec();
    if ed_shape != [1, d] {
        return Err(Error::dim("saliency_feature", &ed_shape, &[1, d]));
    }
    let ew = g.matmul(e, w_s)?;
    let edt = g.transpose(doc_embedding);
    let s = g.matmul(ew, edt)?;
    let s = g.tanh(s);
    let scaled = g.scale_rows(e, s)?;
    let y = params.linear("features.saliency")?.forward(g, scaled)?;
    Ok(g.relu(y))
}

/// The five feature matrices for `doc`, computed from sentence
/// representations `e` (`[n × d]`, document order).
#[derive(Debug, Clone, Copy)]
pub struct Features {
    pub length: Var,
    pub position: Var,
    pub section: Var,
    pub correlation: Var,
    pub saliency: Var,
}

impl Features {
    pub fn all(&self) -> [Var; 5] {
        [self.length, self.position, self.section, self.correlation, self.saliency]
    }
}

pub fn sentence_features(g: &mut Graph, params: &Bound, doc: &Document, e: Var) -> Result<Features> {
    let lengths: Vec<usize> = doc.sentences().map(|s| s.char_length).collect();
    let positions: Vec<usize> = doc.sentences().map(|s| s.doc_position).collect();
    let sections: Vec<usize> = doc.sentences().map(|s| s.section_index).collect();
    if g.value(e).rows() != lengths.len() {
        return Err(Error::dim("sentence_features", g.shape(e), &[lengths.len()]));
    }
    let doc_embedding = document_embedding(g, e, params.get("W_sents")?)?;
    Ok(Features {
        length: length_feature(g, params, &lengths)?,
        position: position_feature(g, params, &positions)?,
        section: section_feature(g, params, &sections)?,
        correlation: correlation_feature(g, params, e)?,
        saliency: saliency_feature(g, params, e, doc_embedding)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, grad_check_many, Tensor};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(d: usize) -> FeatureConfig {
        FeatureConfig {
            d_model: d,
            length_buckets: DEFAULT_LENGTH_BUCKETS,
            position_buckets: 50,
            section_buckets: 8,
        }
    }

    fn store(d: usize, seed: u64) -> ParamStore {
        let mut s = ParamStore::new();
        insert_feature_params(&mut s, &cfg(d), &mut ChaCha8Rng::seed_from_u64(seed));
        s
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn run(params: &ParamStore, f: impl FnOnce(&mut Graph, &Bound) -> Result<Var>) -> Tensor {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let y = f(&mut g, &bound).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn length_buckets() {
        let p = store(4, 1);
        let y = run(&p, |g, b| length_feature(g, b, &[73, 78, 10 * DEFAULT_LENGTH_BUCKETS + 5, 5000]));
        assert_eq!(y.row(0), y.row(1));
        assert_eq!(y.row(2), y.row(3));
        assert!(y.data().iter().all(|&v| v >= 0.0));
        assert_eq!(length_bucket(10 * DEFAULT_LENGTH_BUCKETS + 5, DEFAULT_LENGTH_BUCKETS), 99);
    }

    #[test]
    fn position_and_section_clamp() {
        let p = store(4, 2);
        let y = run(&p, |g, b| position_feature(g, b, &[3, 3, 49, 400]));
        assert_eq!(y.row(0), y.row(1));
        assert_eq!(y.row(2), y.row(3));
        let y = run(&p, |g, b| section_feature(g, b, &[7, 31, 0]));
        assert_eq!(y.row(0), y.row(1));
        assert!(y.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_correlation_matrix_gives_bias_rows() {
        let mut p = store(3, 3);
        p.get_mut("W_c").unwrap().scale_in_place(0.0);
        let e = random(4, 3, 9);
        let y = run(&p, |g, b| {
            let e = g.constant(e.clone());
            correlation_feature(g, b, e)
        });
        let bias = p.get("features.correlation.bias").unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(y.get(i, j), bias.data()[j].max(0.0));
            }
        }
        let single = run(&p, |g, b| {
            let e = g.constant(random(1, 3, 1));
            correlation_feature(g, b, e)
        });
        assert_eq!(single.shape(), &[1, 3]);
    }

    #[test]
    fn document_embedding_cases() {
        let row = vec![0.5, -1.0, 2.0];
        let e = Tensor::from_rows(&vec![row.clone(); 4]).unwrap();
        let w = random(3, 1, 4);
        let mut g = Graph::new();
        let (ev, wv) = (g.constant(e), g.constant(w.clone()));
        let ed = document_embedding(&mut g, ev, wv).unwrap();
        for (a, b) in g.value(ed).data().iter().zip(&row) {
            assert_abs_diff_eq!(*a, b / 4.0, epsilon = 1e-15);
        }
        let single = g.constant(Tensor::from_rows(std::slice::from_ref(&row)).unwrap());
        let ed = document_embedding(&mut g, single, wv).unwrap();
        assert_eq!(g.value(ed).data(), row.as_slice());
    }

    #[test]
    fn saliency_hand_instance() {
        // n=3, d=2 with W_s = I, identity output linear
        let mut p = store(2, 5);
        *p.get_mut("W_s").unwrap() = Tensor::eye(2);
        *p.get_mut("features.saliency.weight").unwrap() = Tensor::eye(2);
        *p.get_mut("features.saliency.bias").unwrap() = Tensor::zeros(&[2]);
        let e = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]]).unwrap();
        let ed = Tensor::from_rows(&[vec![0.5, 0.25]]).unwrap();
        let y = run(&p, |g, b| {
            let (e, ed) = (g.constant(e.clone()), g.constant(ed.clone()));
            saliency_feature(g, b, e, ed)
        });
        // s = tanh([0.5, 0.5, -0.25])
        let s = [0.5f64.tanh(), 0.5f64.tanh(), (-0.25f64).tanh()];
        let want = [[s[0], 0.0], [0.0, 2.0 * s[1]], [(-s[2]).max(0.0), s[2].max(0.0)]];
        for (i, row) in want.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                assert_abs_diff_eq!(y.get(i, j), w, epsilon = 1e-15);
            }
        }

        let mut zero = p.clone();
        zero.get_mut("W_s").unwrap().scale_in_place(0.0);
        *zero.get_mut("features.saliency.bias").unwrap() = Tensor::vector(vec![0.3, -0.2]);
        let y = run(&zero, |g, b| {
            let (e, ed) = (g.constant(e.clone()), g.constant(ed.clone()));
            saliency_feature(g, b, e, ed)
        });
        for i in 0..3 {
            assert_eq!(y.row(i), &[0.3, 0.0]);
        }
    }

    #[test]
    fn shape_errors() {
        let p = store(3, 1);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let e = g.constant(random(4, 2, 1));
        assert!(correlation_feature(&mut g, &b, e).is_err());
        let e = g.constant(random(4, 3, 1));
        let ed = g.constant(random(1, 2, 1));
        assert!(saliency_feature(&mut g, &b, e, ed).is_err());
    }

    #[test]
    fn feature_gradients() {
        let p = store(4, 7);
        let names: Vec<String> = p.names().map(str::to_string).collect();
        let values: Vec<Tensor> = p.iter().map(|(_, t)| t.clone()).collect();
        let e = random(5, 4, 8);
        let weights = random(5, 4, 10);
        let doc = Document::from_sections(
            "g",
            "",
            &[("a", vec!["one two three", "four"]), ("b", vec!["five six", "seven", "eight nine ten eleven"])],
        );
        type Feat = fn(&Features) -> Var;
        let picks: [(&str, Feat); 5] = [
            ("length", |f| f.length),
            ("position", |f| f.position),
            ("section", |f| f.section),
            ("correlation", |f| f.correlation),
            ("saliency", |f| f.saliency),
        ];
        for (name, pick) in picks {
            let mut inputs = values.clone();
            inputs.push(e.clone());
            let err = grad_check_many(
                |g: &mut Graph, vars| {
                    let (params, x) = vars.split_at(vars.len() - 1);
                    let b = Bound::from_vars(names.iter().map(String::as_str), params);
                    let f = sentence_features(g, &b, &doc, x[0])?;
                    let w = g.constant(weights.clone());
                    let y = g.mul(pick(&f), w)?;
                    Ok(g.sum(y))
                },
                &inputs,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{name}: {err}");
        }
        let w = random(4, 1, 11);
        let err = grad_check(
            |g, x| {
                let w = g.constant(w.clone());
                let ed = document_embedding(g, x, w)?;
                let t = g.tanh(ed);
                Ok(g.sum(t))
            },
            &e,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "document embedding: {err}");
    }

    proptest! {
        #[test]
        fn permutation_equivariance(seed in any::<u64>(), n in 1usize..7) {
            let p = store(3, seed);
            let e = random(n, 3, seed ^ 5);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            perm.rotate_left(n / 2);
            let permuted = Tensor::from_rows(&perm.iter().map(|&i| e.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
            let both = |x: &Tensor| {
                let mut g = Graph::new();
                let b = p.bind(&mut g);
                let x = g.constant(x.clone());
                let c = correlation_feature(&mut g, &b, x).unwrap();
                let ed = document_embedding(&mut g, x, b.get("W_sents").unwrap()).unwrap();
                let s = saliency_feature(&mut g, &b, x, ed).unwrap();
                (g.value(c).clone(), g.value(s).clone(), g.value(ed).clone())
            };
            let (c0, s0, d0) = both(&e);
            let (c1, s1, d1) = both(&permuted);
            prop_assert!(d0.max_abs_diff(&d1) < 1e-12);
            for (k, &i) in perm.iter().enumerate() {
                for j in 0..3 {
                    prop_assert!((c1.get(k, j) - c0.get(i, j)).abs() < 1e-12);
                    prop_assert!((s1.get(k, j) - s0.get(i, j)).abs() < 1e-12);
                }
            }
            prop_assert!(c0.data().iter().chain(s0.data()).all(|&v| v >= 0.0));
        }

        #[test]
        fn document_weights_sum_to_one(seed in any::<u64>(), n in 1usize..10) {
            let e = random(n, 4, seed);
            let w = random(4, 1, seed ^ 3);
            let mut g = Graph::new();
            let (ev, wv) = (g.constant(e), g.constant(w));
            let logits = g.matmul(ev, wv).unwrap();
            let weights = g.softmax(logits, 0).unwrap();
            prop_assert!((g.value(weights).sum() - 1.0).abs() < 1e-12);
        }
    }
}
