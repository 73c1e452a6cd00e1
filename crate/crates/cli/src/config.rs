//! Run configuration: defaults, a flat `key=value` file, then overrides.
//!
//! The model section (model keys, encoder keys and the seed) determines what
//! a checkpoint computes; its hash is stamped on every artifact and checked
//! whenever an artifact is consumed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sectsum_core::encoder::{LookupEncoder, SentenceEncoder, StubEncoder};
use sectsum_core::extractor::SelectionConfig;
use sectsum_core::model::{config_hash, ModelConfig};
use sectsum_core::training::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Stub,
    External,
}

impl FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stub" => Ok(Self::Stub),
            "external" => Ok(Self::External),
            other => Err(format!("unknown encoder `{other}` (expected stub or external)")),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stub => "stub",
            Self::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub seed: u64,
    /// JSONL vectors file for the external encoder.
    pub vectors: Option<PathBuf>,
    /// Token given its own axis by the stub encoder.
    pub marker: Option<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Stub,
            seed: 0,
            vectors: None,
            marker: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
}

const TRAIN_KEYS: [&str; 10] = [
    "lr_scale",
    "warmup_steps",
    "accumulation_steps",
    "clip_norm",
    "epochs",
    "reinforced",
    "candidates_k",
    "budget_ratio",
    "trigram_threshold",
    "seed",
];

const ENCODER_KEYS: [&str; 4] = ["encoder", "encoder_seed", "encoder_vectors", "encoder_marker"];

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::contract(format!("invalid value `{value}` for `{key}`")))
}

fn optional(value: &str) -> Option<String> {
    match value {
        "" | "none" => None,
        v => Some(v.to_string()),
    }
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        if self.model.set(key, value).map_err(CliError::from)? {
            return Ok(());
        }
        let t = &mut self.train;
        match key {
            "lr_scale" => t.lr_scale = parse(key, value)?,
            "warmup_steps" => t.warmup_steps = parse(key, value)?,
            "accumulation_steps" => t.accumulation_steps = parse(key, value)?,
            "clip_norm" => t.clip_norm = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "reinforced" => t.reinforced = parse(key, value)?,
            "candidates_k" => t.candidates_k = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "budget_ratio" => t.selection.budget_ratio = parse(key, value)?,
            "trigram_threshold" => {
                t.selection.trigram_threshold = match optional(value) {
                    None => None,
                    Some(v) => Some(parse(key, &v)?),
                }
            }
            "encoder" => self.encoder.kind = value.parse().map_err(CliError::contract)?,
            "encoder_seed" => self.encoder.seed = parse(key, value)?,
            "encoder_vectors" => self.encoder.vectors = optional(value).map(PathBuf::from),
            "encoder_marker" => self.encoder.marker = optional(value),
            _ => return Err(CliError::contract(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::contract(format!("{origin}:{}: expected key=value, got `{line}`", i + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| e.context(format!("{origin}:{}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.encoder.kind == EncoderKind::External && self.encoder.vectors.is_none() {
            return Err(CliError::contract("encoder=external needs encoder_vectors"));
        }
        if self.encoder.kind == EncoderKind::External && self.encoder.marker.is_some() {
            return Err(CliError::contract("encoder_marker only applies to encoder=stub"));
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionConfig {
        self.train.selection
    }

    fn encoder_lines(&self) -> String {
        let e = &self.encoder;
        let path = e.vectors.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        format!(
            "encoder={}\nencoder_seed={}\nencoder_vectors={path}\nencoder_marker={}\n",
            e.kind,
            e.seed,
            e.marker.as_deref().unwrap_or("none")
        )
    }

    /// Settings that change what a trained model outputs.
    pub fn model_section(&self) -> String {
        format!("{}{}seed={}\n", self.model.canonical(), self.encoder_lines(), self.train.seed)
    }

    pub fn hash(&self) -> u64 {
        config_hash(&self.model_section())
    }

    /// Every setting, one `key=value` per line in a fixed order.
    pub fn canonical(&self) -> String {
        let t = &self.train;
        let threshold = t
            .selection
            .trigram_threshold
            .map_or("none".to_string(), |v| v.to_string());
        let train = [
            t.lr_scale.to_string(),
            t.warmup_steps.to_string(),
            t.accumulation_steps.to_string(),
            t.clip_norm.to_string(),
            t.epochs.to_string(),
            t.reinforced.to_string(),
            t.candidates_k.to_string(),
            t.selection.budget_ratio.to_string(),
            threshold,
        ];
        let train: String = TRAIN_KEYS
            .iter()
            .zip(train)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        format!("{}{train}", self.model_section())
    }

    pub fn build_encoder(&self) -> CliResult<Box<dyn SentenceEncoder>> {
        let d = self.model.d_model;
        let enc: Box<dyn SentenceEncoder> = match self.encoder.kind {
            EncoderKind::Stub => {
                let stub = StubEncoder::new(self.encoder.seed, d);
                Box::new(match &self.encoder.marker {
                    Some(m) => stub.with_marker(m),
                    None => stub,
                })
            }
            EncoderKind::External => {
                let path = self.encoder.vectors.as_ref().expect("validated");
                let lookup = LookupEncoder::from_jsonl(path)?;
                if lookup.dim() != d {
                    return Err(CliError::contract(format!(
                        "external vectors have dimension {} but d_model is {d}",
                        lookup.dim()
                    )));
                }
                Box::new(lookup)
            }
        };
        Ok(enc)
    }
}

/// Lines of the model section that differ between two config texts, as
/// `key: artifact=... current=...`.
pub fn section_diff(artifact: &str, current: &str) -> Vec<String> {
    let pairs = |text: &str| -> Vec<(String, String)> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    };
    let a = pairs(artifact);
    let c = pairs(current);
    let keys = ModelConfig::KEYS
        .iter()
        .copied()
        .chain(ENCODER_KEYS)
        .chain(["seed"]);
    let lookup = |v: &[(String, String)], k: &str| {
        v.iter()
            .find(|(key, _)| key == k)
            .map_or("<unset>".to_string(), |(_, val)| val.clone())
    };
    keys.filter_map(|k| {
        let (x, y) = (lookup(&a, k), lookup(&c, k));
        (x != y).then(|| format!("{k}: artifact={x} current={y}"))
    })
    .collect()
}

/// Fails with the differing keys when an artifact was produced under a
/// different model section.
pub fn check_hash(found: u64, artifact_config: &str, cfg: &RunConfig, what: &str) -> CliResult<()> {
    if found == cfg.hash() {
        return Ok(());
    }
    let diff = section_diff(artifact_config, &cfg.model_section());
    Err(CliError::contract(format!(
        "{what} was produced with config hash {found:016x} but this run has {:016x}:\n  {}",
        cfg.hash(),
        if diff.is_empty() {
            "(no differing keys found)".to_string()
        } else {
            diff.join("\n  ")
        }
    )))
}
