//! Command-line front end: one subcommand per stage, all artifacts written atomically
//! with a `# seed=.. config_hash=..` header line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use annotransfer::{Error, ErrorCategory, Result};
use clap::{Parser, Subcommand};

use commands::{CalibrateArgs, Ctx};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "annotransfer", version, about = "Reliability-aware attribute annotation transfer")]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic sources and a target from the configured generator.
    Generate,
    /// Binarize continuous annotations with thresholds searched against a reference.
    Clean {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Split a source by subject and train its classifier.
    TrainMac {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Predict with reliabilities and choose per-attribute thresholds.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        test_embeddings: PathBuf,
        #[arg(long)]
        test_annotations: PathBuf,
        #[arg(long)]
        target_embeddings: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Transfer, aggregate and repair the calibrated sources' target predictions.
    Transfer {
        /// `NAME=DIR`, where DIR holds the output of `calibrate` and `train-mac` for NAME.
        /// Repeat for several sources; order sets the tie-break priority.
        #[arg(long = "source", value_parser = parse_source, required = true)]
        sources: Vec<(String, PathBuf)>,
        /// Target schema.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        target_embeddings: PathBuf,
    },
    /// Positive/negative/undefined distribution of an annotation file.
    Stats {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Accuracy, precision and recall of annotations against ground truth.
    EvaluateLabels {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Provenance CSV from `transfer`; adds the main-source table.
        #[arg(long)]
        provenance: Option<PathBuf>,
    },
    /// Train the logistic-regression comparator on a subject-exclusive split.
    RecogTrain {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Verification and identification metrics; hamming comparator unless --model is given.
    RecogEval {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write cosine embedding scores for the same pairs.
        #[arg(long)]
        embedding_scores: bool,
    },
    /// EER-weighted fusion of two score files over the same pairs.
    Fuse {
        #[arg(long)]
        primary: PathBuf,
        #[arg(long)]
        secondary: PathBuf,
    },
}

fn parse_source(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected NAME=DIR, got `{s}`")),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let config = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    let ctx = Ctx { config, out: cli.out };
    match &cli.command {
        Command::Generate => commands::generate(&ctx),
        Command::Clean { scores, reference, schema } => commands::clean(&ctx, scores, reference, schema),
        Command::TrainMac {
            embeddings,
            annotations,
            schema,
            name,
        } => commands::train_mac(&ctx, embeddings, annotations, schema, name),
        Command::Calibrate {
            model,
            schema,
            test_embeddings,
            test_annotations,
            target_embeddings,
            name,
        } => commands::calibrate(
            &ctx,
            &CalibrateArgs {
                model,
                schema,
                test_embeddings,
                test_annotations,
                target_embeddings,
                name,
            },
        ),
        Command::Transfer {
            sources,
            schema,
            target_embeddings,
        } => commands::transfer_cmd(&ctx, sources, schema, target_embeddings),
        Command::Stats { annotations, schema } => commands::stats(&ctx, annotations, schema),
        Command::EvaluateLabels {
            predicted,
            truth,
            schema,
            provenance,
        } => commands::evaluate_labels_cmd(&ctx, predicted, truth, schema, provenance.as_deref()),
        Command::RecogTrain {
            embeddings,
            annotations,
            schema,
        } => commands::recog_train(&ctx, embeddings, annotations, schema),
        Command::RecogEval {
            embeddings,
            annotations,
            schema,
            model,
            embedding_scores,
        } => commands::recog_eval(&ctx, embeddings, annotations, schema, model.as_deref(), *embedding_scores),
        Command::Fuse { primary, secondary } => commands::fuse(&ctx, primary, secondary),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error[{}]: {e}", category.as_str());
            ExitCode::from(match category {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Stage => 4,
            })
        }
    }
}
