use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use roletrack::{run, run_pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(
    name = "roletrack",
    version,
    about = "Role tracking and churn prediction for edit histories"
)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides ROLETRACK_OUT and the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse events into per-user quarterly namespace counts.
    Ingest,
    /// Build the time-sliced corpus.
    Corpus,
    /// Fit the dynamic topic model and infer role mixtures.
    FitDtm,
    /// Build the user-by-(quarter, role) profile matrix.
    Profiles,
    /// Factorise profiles and assign clusters.
    Cluster,
    /// Label windows and compute churn features.
    Dataset,
    /// Train the configured classifier on the whole dataset.
    Train,
    /// Cross-validate and write metrics, lift and per-window results.
    Eval,
    /// Retrain without each feature group.
    Ablate,
    /// Generate a synthetic population with known roles.
    Synth,
    /// Render SVG plots from earlier outputs.
    Report,
    /// Run every stage from ingest to report.
    Pipeline,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Corpus => Stage::Corpus,
            Command::FitDtm => Stage::FitDtm,
            Command::Profiles => Stage::Profiles,
            Command::Cluster => Stage::Cluster,
            Command::Dataset => Stage::Dataset,
            Command::Train => Stage::Train,
            Command::Eval => Stage::Eval,
            Command::Ablate => Stage::Ablate,
            Command::Synth => Stage::Synth,
            Command::Report => Stage::Report,
            Command::Pipeline => return None,
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
    .and_then(|c| c.finish(cli.seed, cli.out.clone()));
    let result = config.and_then(|c| match cli.command.stage() {
        Some(s) => run(s, &c),
        None => run_pipeline(&c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
