use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use squad_transfer::align::PoolingMode;

mod commands;
mod config;

use commands::{AnalyzeArgs, CompareArgs, Stage, Status};
use config::{Config, Overrides};

/// Translate SQuAD-format datasets sentence by sentence and realign the
/// answer spans.
#[derive(Debug, Parser)]
#[command(name = "squad-transfer", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "SQUAD_TRANSFER_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Directory for stage artifacts and default caches.
    #[arg(long, global = true)]
    artifact_dir: Option<PathBuf>,
    /// Seed for synthetic corpora and the perturbing MT mock.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Source dataset in SQuAD2.0 JSON.
    #[arg(long, short)]
    input: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Pooling {
    InContext,
    Standalone,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run split, translate, align and compose, skipping stages already up to date.
    Run {
        #[command(flatten)]
        stage: StageArgs,
        /// Also copy the translated dataset here.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Split contexts into sentences and map answers to sentence units.
    Split(StageArgs),
    /// Translate sentences, questions and answers through the cache.
    Translate(StageArgs),
    /// Locate each translated answer in its translated sentence unit.
    Align(StageArgs),
    /// Assemble the target dataset and the drop manifest.
    Compose(StageArgs),
    /// Dataset statistics.
    Stats {
        dataset: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// SQuAD2.0 F1 and exact match of predictions against a gold dataset.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        /// JSON object mapping question ids to predicted answers.
        #[arg(long)]
        predictions: PathBuf,
        /// Language for answer normalization; defaults to the target language.
        #[arg(long)]
        lang: Option<String>,
        /// Include per-question scores.
        #[arg(long)]
        per_question: bool,
    },
    /// Error taxonomy, corruption rate and difficulty profiles of an aligned dataset.
    Analyze {
        /// Reference dataset with the gold spans.
        #[arg(long)]
        source: PathBuf,
        /// Dataset produced by alignment.
        #[arg(long)]
        aligned: PathBuf,
        /// Reviewed records (JSONL) to use instead of comparing the datasets.
        #[arg(long)]
        review: Option<PathBuf>,
        /// Write the review records for manual annotation.
        #[arg(long)]
        write_review: Option<PathBuf>,
        /// Align artifact for the corruption rate; defaults to the one in the artifact directory.
        #[arg(long)]
        align_artifact: Option<PathBuf>,
        /// JSON object mapping question ids to answer dependency depths.
        #[arg(long)]
        depths: Option<PathBuf>,
    },
    /// Exact-span recovery of several aligners on a synthetic corruption corpus.
    CompareAligners {
        /// Triplet corpus (JSONL); generated when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Size of the generated corpus.
        #[arg(long, default_value_t = 500)]
        size: usize,
        /// Generate a corpus without corruption.
        #[arg(long)]
        clean: bool,
        #[arg(long, value_delimiter = ',', default_value = "literal,levenshtein,embedding")]
        strategies: Vec<String>,
        /// Override the configured pooling mode.
        #[arg(long, value_enum)]
        pooling: Option<Pooling>,
        /// Save the corpus used.
        #[arg(long)]
        write_corpus: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn dispatch(cli: &Cli, cfg: &Config) -> Result<Status> {
    match &cli.command {
        Command::Run { stage, output } => commands::stages(cfg, &stage.input, None, output.as_deref()),
        Command::Split(a) => commands::stages(cfg, &a.input, Some(Stage::Split), None),
        Command::Translate(a) => commands::stages(cfg, &a.input, Some(Stage::Translate), None),
        Command::Align(a) => commands::stages(cfg, &a.input, Some(Stage::Align), None),
        Command::Compose(a) => commands::stages(cfg, &a.input, Some(Stage::Compose), None),
        Command::Stats { dataset, json } => commands::stats(dataset, *json),
        Command::Evaluate {
            gold,
            predictions,
            lang,
            per_question,
        } => commands::evaluate_cmd(cfg, gold, predictions, lang.as_deref(), *per_question),
        Command::Analyze {
            source,
            aligned,
            review,
            write_review,
            align_artifact,
            depths,
        } => commands::analyze(
            cfg,
            &AnalyzeArgs {
                source,
                aligned,
                review: review.as_deref(),
                write_review: write_review.as_deref(),
                align_artifact: align_artifact.as_deref(),
                depths: depths.as_deref(),
            },
        ),
        Command::CompareAligners {
            corpus,
            size,
            clean,
            strategies,
            pooling,
            write_corpus,
            json,
        } => commands::compare(
            cfg,
            &CompareArgs {
                corpus: corpus.as_deref(),
                size: *size,
                clean: *clean,
                strategies,
                pooling: pooling.map(|p| match p {
                    Pooling::InContext => PoolingMode::InContext,
                    Pooling::Standalone => PoolingMode::Standalone,
                }),
                write_corpus: write_corpus.as_deref(),
                json: *json,
            },
        ),
    }
}

fn execute(cli: &Cli) -> Result<Status> {
    let overrides = Overrides {
        parallelism: cli.parallelism,
        artifact_dir: cli.artifact_dir.clone(),
        seed: cli.seed,
    };
    let cfg = Config::load(cli.config.as_deref(), &overrides)?;
    match cfg.parallelism {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("cannot start worker pool")?
            .install(|| dispatch(cli, &cfg)),
        _ => dispatch(cli, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Drops) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
