//! The full scoring model: embedding composition, the windowed transformer
//! stack, sentence features and the scoring linear.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attention::{
    build_attention_mask, insert_layer_params, padded_length, select_global, transformer_stack, GlobalPolicy,
    LayerConfig,
};
use crate::corpus::{Document, DEFAULT_MAX_SENTENCES};
use crate::encoder::{compose_embeddings, DEFAULT_MAX_CHUNK_TOKENS, DEFAULT_S_MAX};
use crate::error::{Error, Result};
use crate::extractor::{insert_scorer_params, score_logits, Combine};
use crate::features::{insert_feature_params, sentence_features, FeatureConfig, DEFAULT_LENGTH_BUCKETS};
use crate::numerics::{sigmoid, Bound, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub heads: usize,
    pub window: usize,
    /// Percentage of sentences attending globally.
    pub global_ratio: f64,
    pub global_policy: GlobalPolicy,
    pub max_sentences: usize,
    pub max_chunk_tokens: usize,
    pub s_max: usize,
    pub length_buckets: usize,
    pub combine: Combine,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            d_ff: 256,
            layers: 2,
            heads: 4,
            window: 50,
            global_ratio: 20.0,
            global_policy: GlobalPolicy::Stride,
            max_sentences: DEFAULT_MAX_SENTENCES,
            max_chunk_tokens: DEFAULT_MAX_CHUNK_TOKENS,
            s_max: DEFAULT_S_MAX,
            length_buckets: DEFAULT_LENGTH_BUCKETS,
            combine: Combine::Sum,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::arg(format!("invalid value `{value}` for `{key}`")))
}

impl ModelConfig {
    pub const KEYS: [&'static str; 12] = [
        "d_model",
        "d_ff",
        "layers",
        "heads",
        "window",
        "global_ratio",
        "global_policy",
        "max_sentences",
        "max_chunk_tokens",
        "s_max",
        "length_buckets",
        "combine",
    ];

    /// Sets one field from its textual form. Returns `Ok(false)` for keys
    /// that do not belong to the model.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "d_model" => self.d_model = parse(key, value)?,
            "d_ff" => self.d_ff = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "global_ratio" => self.global_ratio = parse(key, value)?,
            "global_policy" => self.global_policy = value.trim().parse()?,
            "max_sentences" => self.max_sentences = parse(key, value)?,
            "max_chunk_tokens" => self.max_chunk_tokens = parse(key, value)?,
            "s_max" => self.s_max = parse(key, value)?,
            "length_buckets" => self.length_buckets = parse(key, value)?,
            "combine" => self.combine = value.trim().parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// One `key=value` line per field, in [`Self::KEYS`] order.
    pub fn canonical(&self) -> String {
        let values = [
            self.d_model.to_string(),
            self.d_ff.to_string(),
            self.layers.to_string(),
            self.heads.to_string(),
            self.window.to_string(),
            self.global_ratio.to_string(),
            self.global_policy.to_string(),
            self.max_sentences.to_string(),
            self.max_chunk_tokens.to_string(),
            self.s_max.to_string(),
            self.length_buckets.to_string(),
            self.combine.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Reads the lines this config owns from `key=value` text, ignoring
    /// other keys.
    pub fn from_canonical(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                cfg.set(k.trim(), v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn layer_config(&self) -> LayerConfig {
        LayerConfig {
            d_model: self.d_model,
            d_ff: self.d_ff,
            heads: self.heads,
            window: self.window,
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            d_model: self.d_model,
            length_buckets: self.length_buckets,
            position_buckets: self.max_sentences,
            section_buckets: self.s_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_config().validate()?;
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::arg(format!("d_model must be even, got {}", self.d_model)));
        }
        if !(0.0..=100.0).contains(&self.global_ratio) {
            return Err(Error::arg(format!("global ratio {} outside [0, 100]", self.global_ratio)));
        }
        for (name, v) in [
            ("d_ff", self.d_ff),
            ("max_sentences", self.max_sentences),
            ("max_chunk_tokens", self.max_chunk_tokens),
            ("s_max", self.s_max),
            ("length_buckets", self.length_buckets),
        ] {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// First 8 bytes of SHA-256 over `text`, big-endian.
pub fn config_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Registers every model parameter, drawing in a fixed order from a
/// generator seeded with `seed`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let d = cfg.d_model;
    store.insert_uniform("segment_table", &[2, d], &mut rng);
    store.insert_uniform("section_table", &[cfg.s_max, d], &mut rng);
    let layer = cfg.layer_config();
    for l in 0..cfg.layers {
        insert_layer_params(&mut store, l, &layer, &mut rng);
    }
    insert_feature_params(&mut store, &cfg.feature_config(), &mut rng);
    insert_scorer_params(&mut store, d, cfg.combine, &mut rng);
    Ok(store)
}

/// Global positions for one document. Fixed for a given `(seed, doc id)`
/// so repeated passes over a document see the same globals.
pub fn document_globals(cfg: &ModelConfig, n: usize, seed: u64, doc_id: &str) -> Result<Vec<usize>> {
    let doc_seed = config_hash(&format!("{seed}:{doc_id}"));
    select_global(n, cfg.global_ratio, cfg.global_policy, doc_seed)
}

/// Pre-squash sentence scores `[n × 1]` for `doc`, whose encoder output is
/// `semantic` (`[n × d]`).
pub fn forward(
    g: &mut Graph,
    params: &Bound,
    cfg: &ModelConfig,
    doc: &Document,
    semantic: &Tensor,
    globals: &[usize],
) -> Result<Var> {
    let n = doc.n_sentences;
    if n > cfg.max_sentences {
        return Err(Error::arg(format!(
            "document `{}` has {n} sentences, over max_sentences {}",
            doc.id, cfg.max_sentences
        )));
    }
    let sem = g.constant(semantic.clone());
    let e0 = compose_embeddings(g, sem, doc, params.get("segment_table")?, params.get("section_table")?)?;
    let mask = build_attention_mask(&[n], cfg.window, &[globals.to_vec()], cfg.max_sentences)?;
    let padded = g.pad_rows(e0, padded_length(n, cfg.window))?;
    let h = transformer_stack(g, params, cfg.layers, padded, mask.row(0), &cfg.layer_config())?;
    let e = g.slice_rows(h, 0, n)?;
    let f = sentence_features(g, params, doc, e)?;
    let parts = [e, f.length, f.position, f.section, f.correlation, f.saliency];
    score_logits(g, params, &parts, cfg.combine)
}

/// Pre-squash sentence scores on a frozen parameter snapshot.
pub fn predict_logits(
    params: &ParamStore,
    cfg: &ModelConfig,
    doc: &Document,
    semantic: &Tensor,
    globals: &[usize],
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| g.constant(t.clone())).collect();
    let bound = Bound::from_vars(params.names(), &vars);
    let logits = forward(&mut g, &bound, cfg, doc, semantic, globals)?;
    Ok(g.value(logits).data().to_vec())
}

/// Sentence probabilities on a frozen parameter snapshot.
pub fn predict(
    params: &ParamStore,
    cfg: &ModelConfig,
    doc: &Document,
    semantic: &Tensor,
    globals: &[usize],
) -> Result<Vec<f64>> {
    let s = predict_logits(params, cfg, doc, semantic, globals)?;
    Ok(s.into_iter().map(sigmoid).collect())
}
