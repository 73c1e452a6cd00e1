//! Losses, learning-rate schedule, optimizer and the training loop.
//!
//! Training uses batch size 1: gradients from `accumulation_steps`
//! documents are averaged, clipped and applied as one update. A partial
//! batch left at the end of an epoch is dropped, so every epoch makes
//! exactly `docs / accumulation_steps` updates and no gradient is carried
//! across epochs.

mod loss;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::numerics::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{ce_loss, ce_loss_graph, ce_loss_logits, reinforced_loss, reinforced_loss_graph};
pub use optim::{clip_gradients, global_norm, noam_lr, Optimizer, Sgd};

use crate::corpus::Document;
use crate::encoder::{encode_sentences, SentenceEncoder};
use crate::error::{Error, Result};
use crate::extractor::{select_sentences, SelectionConfig};
use crate::model::{document_globals, forward, predict_logits, ModelConfig};
use crate::numerics::{sigmoid, Graph, ParamStore, Tensor};
use crate::rouge::{extract_text, recall_triple, sample_candidates, Candidate};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_scale: f64,
    pub warmup_steps: usize,
    pub accumulation_steps: usize,
    pub clip_norm: f64,
    pub epochs: usize,
    pub reinforced: bool,
    pub candidates_k: usize,
    pub seed: u64,
    /// Used to score held-out selections.
    pub selection: SelectionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_scale: 1.0,
            warmup_steps: 100,
            accumulation_steps: 10,
            clip_norm: 1.0,
            epochs: 10,
            reinforced: false,
            candidates_k: 5,
            seed: 0,
            selection: SelectionConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.accumulation_steps == 0 {
            return Err(Error::arg("accumulation_steps must be at least 1"));
        }
        if self.warmup_steps == 0 {
            return Err(Error::arg("warmup_steps must be at least 1"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::arg(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        if self.reinforced && self.candidates_k == 0 {
            return Err(Error::arg("reinforced training needs candidates_k >= 1"));
        }
        self.selection.validate()
    }
}

/// A document with everything the training loop needs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub doc: Document,
    pub labels: Vec<u8>,
    pub semantic: Tensor,
    pub globals: Vec<usize>,
    /// Reward-weighted label sets for the reinforced loss; empty otherwise.
    pub candidates: Vec<Candidate>,
}

impl PreparedDoc {
    pub fn new(
        doc: Document,
        labels: Vec<u8>,
        encoder: &dyn SentenceEncoder,
        model: &ModelConfig,
        train: &TrainConfig,
    ) -> Result<Self> {
        if labels.len() != doc.n_sentences {
            return Err(Error::arg(format!(
                "document `{}` has {} sentences but {} labels",
                doc.id,
                doc.n_sentences,
                labels.len()
            )));
        }
        if encoder.dim() != model.d_model {
            return Err(Error::dim("encoder output", &[encoder.dim()], &[model.d_model]));
        }
        let semantic = encode_sentences(&doc, encoder, model.max_chunk_tokens)?;
        let globals = document_globals(model, doc.n_sentences, train.seed, &doc.id)?;
        let candidates = if train.reinforced {
            sample_candidates(&doc, &labels, train.candidates_k, train.seed)?.candidates
        } else {
            Vec::new()
        };
        Ok(Self {
            doc,
            labels,
            semantic,
            globals,
            candidates,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Heldout,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Heldout => "heldout",
        })
    }
}

/// One metrics row. ROUGE recalls are only computed for the held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub rouge: Option<[f64; 3]>,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "epoch,split,loss,rouge1_recall,rouge2_recall,rougeL_recall,lr";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let rouge = match self.rouge {
            Some([r1, r2, rl]) => format!("{r1},{r2},{rl}"),
            None => ",,".to_string(),
        };
        format!("{},{},{},{},{}", self.epoch, self.split, self.loss, rouge, self.lr)
    }
}

/// Held-out quality of a parameter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub loss: f64,
    /// Fraction of sentences whose thresholded probability matches the label.
    pub accuracy: f64,
    /// Mean ROUGE-1/2/L recall of the selections against the references.
    pub rouge: [f64; 3],
    pub selections: Vec<Vec<usize>>,
}

pub fn evaluate(params: &ParamStore, model: &ModelConfig, docs: &[PreparedDoc], selection: &SelectionConfig) -> Result<EvalReport> {
    let mut loss = 0.0;
    let (mut correct, mut total) = (0usize, 0usize);
    let mut rouge = [0.0; 3];
    let mut selections = Vec::with_capacity(docs.len());
    for d in docs {
        let s = predict_logits(params, model, &d.doc, &d.semantic, &d.globals)?;
        loss += ce_loss_logits(&s, &d.labels)?;
        let p: Vec<f64> = s.iter().map(|&x| sigmoid(x)).collect();
        correct += p
            .iter()
            .zip(&d.labels)
            .filter(|(&p, &y)| u8::from(p > 0.5) == y)
            .count();
        total += p.len();
        let picked = select_sentences(&d.doc, &p, selection)?;
        let mut mask = vec![0u8; d.doc.n_sentences];
        picked.iter().for_each(|&i| mask[i] = 1);
        let r = recall_triple(&extract_text(&d.doc, &mask), &d.doc.reference_summary);
        rouge.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        selections.push(picked);
    }
    let n = docs.len().max(1) as f64;
    Ok(EvalReport {
        loss: loss / n,
        accuracy: correct as f64 / total.max(1) as f64,
        rouge: rouge.map(|r| r / n),
        selections,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub updates: usize,
}

/// Loss and parameter gradients for one document.
fn document_gradients(
    params: &ParamStore,
    model: &ModelConfig,
    d: &PreparedDoc,
    reinforced: bool,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let logits = forward(&mut g, &bound, model, &d.doc, &d.semantic, &d.globals)?;
    let loss = if reinforced {
        reinforced_loss_graph(&mut g, logits, &d.candidates)?
    } else {
        ce_loss_graph(&mut g, logits, &d.labels)?
    };
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    Ok((value, bound.grads(&g)))
}

/// Trains `params` in place. `on_epoch` sees each metrics row as it is
/// produced.
pub fn train(
    params: &mut ParamStore,
    model: &ModelConfig,
    cfg: &TrainConfig,
    train_docs: &[PreparedDoc],
    heldout: &[PreparedDoc],
    optimizer: &mut dyn Optimizer,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate()?;
    if train_docs.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    if train_docs.len() < cfg.accumulation_steps {
        return Err(Error::arg(format!(
            "training set has {} documents, fewer than accumulation_steps = {}",
            train_docs.len(),
            cfg.accumulation_steps
        )));
    }
    if cfg.reinforced {
        if let Some(d) = train_docs.iter().find(|d| d.candidates.is_empty()) {
            return Err(Error::arg(format!("document `{}` has no reward candidates", d.doc.id)));
        }
    }

    let mut metrics = Vec::new();
    let mut updates = 0usize;
    let mut lr = 0.0;
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let mut acc = params.zeros_like();
        let mut pending = 0usize;
        let mut epoch_loss = 0.0;
        for &i in &order {
            let d = &train_docs[i];
            let (loss, grads) = document_gradients(params, model, d, cfg.reinforced)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: updates + 1,
                    doc_id: d.doc.id.clone(),
                    loss,
                });
            }
            epoch_loss += loss;
            for (a, g) in acc.iter_mut().zip(&grads) {
                a.add_assign(g);
            }
            pending += 1;
            if pending == cfg.accumulation_steps {
                for a in acc.iter_mut() {
                    a.scale_in_place(1.0 / pending as f64);
                }
                clip_gradients(&mut acc, cfg.clip_norm);
                updates += 1;
                lr = noam_lr(updates, model.d_model, cfg.warmup_steps, cfg.lr_scale)?;
                optimizer.step(params, &acc, lr)?;
                acc.iter_mut().for_each(|a| a.scale_in_place(0.0));
                pending = 0;
            }
        }
        let row = EpochMetrics {
            epoch,
            split: Split::Train,
            loss: epoch_loss / train_docs.len() as f64,
            rouge: None,
            lr,
        };
        on_epoch(&row);
        metrics.push(row);
        if !heldout.is_empty() {
            let report = evaluate(params, model, heldout, &cfg.selection)?;
            let row = EpochMetrics {
                epoch,
                split: Split::Heldout,
                loss: report.loss,
                rouge: Some(report.rouge),
                lr,
            };
            on_epoch(&row);
            metrics.push(row);
        }
    }
    Ok(TrainReport { metrics, updates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::StubEncoder;

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            d_ff: 16,
            layers: 1,
            heads: 2,
            window: 2,
            max_sentences: 20,
            s_max: 4,
            length_buckets: 10,
            ..ModelConfig::default()
        }
    }

    fn corpus(n: usize, model: &ModelConfig, cfg: &TrainConfig) -> Vec<PreparedDoc> {
        let enc = StubEncoder::new(1, model.d_model);
        (0..n)
            .map(|i| {
                let doc = Document::from_sections(
                    &format!("d{i}"),
                    "alpha beta",
                    &[("s", vec!["alpha beta gamma", "delta epsilon", "zeta eta theta iota"])],
                );
                PreparedDoc::new(doc, vec![1, 0, 0], &enc, model, cfg).unwrap()
            })
            .collect()
    }

    #[test]
    fn partial_batch_is_dropped() {
        let model = tiny_model();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let docs = corpus(25, &model, &cfg);
        let mut params = crate::model::init_params(&model, 0).unwrap();
        let report = train(&mut params, &model, &cfg, &docs, &[], &mut Sgd, |_| {}).unwrap();
        assert_eq!(report.updates, 2);
        assert_eq!(report.metrics.len(), 1);
        let short = corpus(9, &model, &cfg);
        assert!(train(&mut params, &model, &cfg, &short, &[], &mut Sgd, |_| {}).is_err());
    }

    #[test]
    fn empty_and_invalid_inputs() {
        let model = tiny_model();
        let mut params = crate::model::init_params(&model, 0).unwrap();
        assert!(train(&mut params, &model, &TrainConfig::default(), &[], &[], &mut Sgd, |_| {}).is_err());
        let bad = TrainConfig {
            accumulation_steps: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let model = tiny_model();
        let cfg = TrainConfig {
            accumulation_steps: 2,
            ..TrainConfig::default()
        };
        let docs = corpus(2, &model, &cfg);
        let mut params = crate::model::init_params(&model, 0).unwrap();
        params.get_mut("scorer.bias").unwrap().data_mut()[0] = f64::NAN;
        let err = train(&mut params, &model, &cfg, &docs, &[], &mut Sgd, |_| {}).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 1, .. }), "{err}");
    }

    #[test]
    fn metrics_rows() {
        let row = EpochMetrics {
            epoch: 2,
            split: Split::Heldout,
            loss: 0.5,
            rouge: Some([1.0, 0.5, 0.25]),
            lr: 0.01,
        };
        assert_eq!(row.csv_row(), "2,heldout,0.5,1,0.5,0.25,0.01");
        let train_row = EpochMetrics { split: Split::Train, rouge: None, ..row };
        assert_eq!(train_row.csv_row(), "2,train,0.5,,,,0.01");
        assert_eq!(METRICS_HEADER.split(',').count(), 7);
    }
}
