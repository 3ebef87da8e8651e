//! Command-line surface for the credibility-analysis pipeline: dataset
//! synthesis, LSH dedup, pattern mining, weak labeling, featurization,
//! training, fine-tuning, transfer boosting, and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Informational output goes to stderr; results go to the declared files.

mod commands;
mod config;
mod csvio;
mod lock;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use imcred_core::error::CoreError;

#[derive(Parser)]
#[command(
    name = "imcred",
    about = "Image credibility analysis: weak labels, weighted learners, transfer boosting",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step of this command.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic domain-shift benchmark dataset.
    Synth {
        #[command(flatten)]
        common: CommonOpts,
        /// Benchmark spec JSON (defaults to the built-in benchmark).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory (manifest.jsonl, optional images/).
        #[arg(long)]
        out: PathBuf,
        /// Also render each instance as a 16x16 PGM image.
        #[arg(long)]
        images: bool,
    },
    /// Remove low-quality and near-duplicate images from a manifest.
    Dedup {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        /// Filtered manifest destination.
        #[arg(long)]
        out: PathBuf,
        /// Dedup report JSON destination.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Number of LSH hyperplanes.
        #[arg(long)]
        planes: Option<usize>,
        /// Hamming radius treated as duplicate.
        #[arg(long)]
        threshold: Option<usize>,
        /// Minimum shorter-side pixels.
        #[arg(long)]
        min_side: Option<usize>,
        /// Maximum long/short aspect ratio.
        #[arg(long)]
        max_aspect: Option<f64>,
    },
    /// Mine fake-indicative n-gram patterns from a labeled corpus.
    MinePatterns {
        #[command(flatten)]
        common: CommonOpts,
        /// Corpus JSONL: {"id", "text", "label"}.
        #[arg(long)]
        corpus: PathBuf,
        /// Ranking method: chi2 or gain-ratio.
        #[arg(long, default_value = "chi2")]
        method: String,
        #[arg(long, default_value_t = 50)]
        top_k: usize,
        #[arg(long, default_value_t = 3)]
        max_n: usize,
        /// Minimum document frequency for a candidate.
        #[arg(long, default_value_t = 2)]
        min_df: u64,
        /// Pattern file destination (editable JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Weak-label texts by pattern matching.
    WeakLabel {
        #[command(flatten)]
        common: CommonOpts,
        /// Texts JSONL: {"id", "text"}.
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        /// Labels JSONL destination ({"id", "label": 1} per match).
        #[arg(long)]
        out: PathBuf,
    },
    /// Export feature matrices as CSV.
    Featurize {
        #[command(subcommand)]
        kind: FeaturizeKind,
    },
    /// Train a base model.
    Train {
        #[command(subcommand)]
        kind: TrainKind,
    },
    /// Model transfer: replace the output layer and retrain on target data.
    FineTune {
        #[command(flatten)]
        common: CommonOpts,
        /// Source convnet model file.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract intermediate-layer features from a trained convnet.
    ExtractFeatures {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// c5_pooled, fc6 or fc7.
        #[arg(long)]
        layer: String,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated domains to include (default: all).
        #[arg(long)]
        domains: Option<String>,
    },
    /// Run iterative transfer boosting over a manifest.
    TransferBoost {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        /// Boosting rounds K.
        #[arg(long)]
        iterations: Option<usize>,
        /// Weight initialization: average or finetune.
        #[arg(long)]
        init: Option<String>,
        /// Base learner: logreg (features) or convnet (images).
        #[arg(long, default_value = "logreg")]
        base: String,
        /// Ensemble file destination.
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration JSONL log destination.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a model or ensemble on a manifest domain.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, conflicts_with = "ensemble")]
        model: Option<PathBuf>,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Feature CSV to predict from (for models trained on exported
        /// feature matrices rather than inline features).
        #[arg(long)]
        features: Option<PathBuf>,
        /// Domain to evaluate (default target_test).
        #[arg(long, default_value = "target_test")]
        domain: String,
        /// Metrics JSON destination.
        #[arg(long)]
        out: PathBuf,
        /// Optional aligned text table destination.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run the multi-arm baseline comparison.
    Compare {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (report.json, table.txt).
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated arm list (default: all arms).
        #[arg(long)]
        arms: Option<String>,
        /// Render synthetic feature instances as images for visual arms.
        #[arg(long)]
        render_images: bool,
    },
}

#[derive(Subcommand)]
enum FeaturizeKind {
    /// The 16 text features.
    Text {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of lexicon files (positive.txt, negative.txt, ...).
        #[arg(long)]
        lexicons: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bag-of-visual-words histograms.
    Bovw {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Vocabulary size k.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        grid_step: Option<usize>,
        #[arg(long)]
        patch: Option<usize>,
        /// Reuse an existing vocabulary file.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Write the built vocabulary here.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TrainKind {
    /// Weighted logistic regression on a feature CSV or inline manifest features.
    Logreg {
        #[command(flatten)]
        common: CommonOpts,
        /// Feature CSV (as written by featurize / extract-features).
        #[arg(long, conflicts_with = "manifest")]
        features: Option<PathBuf>,
        /// Train on the manifest's inline feature vectors instead.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated training domains (default target_train).
        #[arg(long, default_value = "target_train")]
        domains: String,
    },
    /// Instance-weighted convnet on manifest images.
    Convnet {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Network spec JSON file (default: desk-scale 32x32 network).
        #[arg(long)]
        net_spec: Option<PathBuf>,
        /// Comma-separated training domains (default auxiliary).
        #[arg(long, default_value = "auxiliary")]
        domains: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version exit 0; bad usage exits 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CoreError> {
    match cli.command {
        Command::Synth { common, spec, out, images } => {
            commands::synth(&common, spec.as_deref(), &out, images)
        }
        Command::Dedup {
            common,
            manifest,
            out,
            report,
            planes,
            threshold,
            min_side,
            max_aspect,
        } => commands::dedup(
            &common,
            &manifest,
            &out,
            report.as_deref(),
            planes,
            threshold,
            min_side,
            max_aspect,
        ),
        Command::MinePatterns { common, corpus, method, top_k, max_n, min_df, out } => {
            commands::mine_patterns(&common, &corpus, &method, top_k, max_n, min_df, &out)
        }
        Command::WeakLabel { common, texts, patterns, out } => {
            commands::weak_label(&common, &texts, &patterns, &out)
        }
        Command::Featurize { kind } => match kind {
            FeaturizeKind::Text { common, manifest, lexicons, out } => {
                commands::featurize_text(&common, &manifest, lexicons.as_deref(), &out)
            }
            FeaturizeKind::Bovw { common, manifest, out, k, grid_step, patch, vocab, vocab_out } => {
                commands::featurize_bovw(
                    &common,
                    &manifest,
                    &out,
                    k,
                    grid_step,
                    patch,
                    vocab.as_deref(),
                    vocab_out.as_deref(),
                )
            }
        },
        Command::Train { kind } => match kind {
            TrainKind::Logreg { common, features, manifest, out, domains } => {
                commands::train_logreg(
                    &common,
                    features.as_deref(),
                    manifest.as_deref(),
                    &out,
                    &domains,
                )
            }
            TrainKind::Convnet { common, manifest, out, net_spec, domains } => {
                commands::train_convnet(&common, &manifest, &out, net_spec.as_deref(), &domains)
            }
        },
        Command::FineTune { common, model, manifest, out } => {
            commands::fine_tune(&common, &model, &manifest, &out)
        }
        Command::ExtractFeatures { common, model, manifest, layer, out, domains } => {
            commands::extract_features(&common, &model, &manifest, &layer, &out, domains.as_deref())
        }
        Command::TransferBoost { common, manifest, iterations, init, base, out, log } => {
            commands::transfer_boost(
                &common,
                &manifest,
                iterations,
                init.as_deref(),
                &base,
                &out,
                log.as_deref(),
            )
        }
        Command::Evaluate { common, model, ensemble, manifest, features, domain, out, table } => {
            commands::evaluate(
                &common,
                model.as_deref(),
                ensemble.as_deref(),
                &manifest,
                features.as_deref(),
                &domain,
                &out,
                table.as_deref(),
            )
        }
        Command::Compare { common, manifest, out, arms, render_images } => {
            commands::compare(&common, &manifest, &out, arms.as_deref(), render_images)
        }
    }
}
