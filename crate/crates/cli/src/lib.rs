//! Command-line driver: ingest, label, train, summarize, evaluate, bench,
//! plus `synth` for generating a planted-signal demo corpus.

pub mod commands;
pub mod config;
mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use sectsum_core::scaling::ScalingConfig;
use sectsum_core::synthetic::PlantedConfig;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sectsum", version, about = "Extractive summarization of long sectioned documents")]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedArgs,

    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand. Precedence, lowest first: built-in
/// defaults, `--config`, `--set`, then the dedicated flags.
#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Any config key, e.g. `--set epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true)]
    pub window: Option<usize>,

    /// Percentage of sentences attending globally. `bench` reads only this
    /// flag and defaults to 0.
    #[arg(long, global = true)]
    pub global_ratio: Option<f64>,

    #[arg(long, global = true)]
    pub budget_ratio: Option<f64>,

    /// Integer, or `none` to disable blocking.
    #[arg(long, global = true)]
    pub trigram_threshold: Option<String>,

    #[arg(long, global = true)]
    pub reinforced: bool,

    #[arg(long, global = true)]
    pub layers: Option<usize>,

    #[arg(long, global = true)]
    pub heads: Option<usize>,

    #[arg(long, global = true)]
    pub d_model: Option<usize>,
}

impl SharedArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::io(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("window", self.window.map(|v| v.to_string())),
            ("global_ratio", self.global_ratio.map(|v| v.to_string())),
            ("budget_ratio", self.budget_ratio.map(|v| v.to_string())),
            ("trigram_threshold", self.trigram_threshold.clone()),
            ("reinforced", self.reinforced.then(|| "true".to_string())),
            ("layers", self.layers.map(|v| v.to_string())),
            ("heads", self.heads.map(|v| v.to_string())),
            ("d_model", self.d_model.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, validate and normalize a JSONL corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip bad lines instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Greedy oracle labels at ceil(budget_ratio · n) sentences.
    Label {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Held-out corpus scored after every epoch.
        #[arg(long)]
        heldout: Option<PathBuf>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Score and select sentences with a trained checkpoint.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROUGE recall of summaries against the corpus references.
    Evaluate {
        #[arg(long)]
        summaries: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// TSV report; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time and peak memory of windowed against dense attention.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// TSV output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a planted-signal corpus and its labels.
    Synth {
        #[arg(long)]
        corpus_out: PathBuf,
        #[arg(long)]
        labels_out: PathBuf,
        #[arg(long, default_value_t = 200)]
        docs: usize,
        #[arg(long, default_value_t = 40)]
        sentences: usize,
        #[arg(long, default_value_t = 4)]
        sections: usize,
        /// Seed of the generator, separate from the run seed.
        #[arg(long, default_value_t = 17)]
        corpus_seed: u64,
    },
}

fn fmt3(v: [f64; 3]) -> String {
    format!("R1 {:.4}  R2 {:.4}  RL {:.4}", v[0], v[1], v[2])
}

/// Runs one parsed invocation, printing its report to stdout.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.shared.resolve()?;
    log::debug!("config hash {:016x}", cfg.hash());
    match &cli.command {
        Command::Ingest { input, out, lenient } => {
            let r = commands::ingest(input, out, &cfg, *lenient)?;
            for (_, m) in &r.failures {
                log::warn!("skipped {m}");
            }
            println!(
                "{} documents, {} sentences, {} sections; {} truncated at {} sentences; {} lines rejected",
                r.docs,
                r.sentences,
                r.sections,
                r.truncated.len(),
                cfg.model.max_sentences,
                r.failures.len()
            );
        }
        Command::Label { corpus, out } => {
            let r = commands::label(corpus, out, &cfg)?;
            for id in &r.empty_references {
                log::warn!("document `{id}` has an empty reference; all labels are 0");
            }
            println!("{} documents labelled, {} positive sentences", r.docs, r.positives);
        }
        Command::Train {
            corpus,
            labels,
            heldout,
            out,
            metrics,
        } => {
            let paths = commands::TrainPaths {
                corpus,
                labels,
                heldout: heldout.as_deref(),
                checkpoint: out,
                metrics: metrics.as_deref(),
            };
            let s = commands::train(&paths, &cfg)?;
            println!("{} updates; checkpoint written to {}", s.report.updates, out.display());
            if let Some(h) = s.heldout {
                println!("held-out accuracy {:.4}; {}", h.accuracy, fmt3(h.rouge));
            }
        }
        Command::Summarize { checkpoint, corpus, out } => {
            let recs = commands::summarize(checkpoint, corpus, out, &cfg)?;
            println!("{} summaries written to {}", recs.len(), out.display());
        }
        Command::Evaluate { summaries, corpus, out } => {
            let (rows, mean) = commands::evaluate(summaries, corpus, &cfg)?;
            let tsv = commands::eval_tsv(&rows, mean);
            match out {
                Some(p) => {
                    io::write_artifact(p, &tsv, &cfg, "evaluate")?;
                    println!("{} documents; mean {}", rows.len(), fmt3(mean));
                }
                None => print!("{tsv}"),
            }
        }
        Command::Bench { sizes, repeats, out } => {
            let scaling = ScalingConfig {
                sizes: sizes.clone(),
                window: cfg.model.window,
                global_ratio: cli.shared.global_ratio.unwrap_or(0.0),
                d_model: cfg.model.d_model,
                heads: cfg.model.heads,
                repeats: *repeats,
                seed: cfg.train.seed,
            };
            let r = commands::bench(&scaling, out.as_deref(), &cfg)?;
            if out.is_none() {
                print!("{}", r.tsv);
            }
            for d in &r.ratios {
                println!(
                    "n {} -> {}: sparse time x{:.2}, dense time x{:.2}, sparse peak x{:.2}, dense peak x{:.2}",
                    d.from_n, d.to_n, d.sparse_time, d.dense_time, d.sparse_peak, d.dense_peak
                );
            }
        }
        Command::Synth {
            corpus_out,
            labels_out,
            docs,
            sentences,
            sections,
            corpus_seed,
        } => {
            let planted = PlantedConfig {
                docs: *docs,
                sentences: *sentences,
                sections: *sections,
                seed: *corpus_seed,
                ..PlantedConfig::default()
            };
            let n = commands::synth(corpus_out, labels_out, &planted, &cfg)?;
            println!("{n} planted documents written to {}", corpus_out.display());
        }
    }
    Ok(())
}
