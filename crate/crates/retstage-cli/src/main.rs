//! `retstage` — file-based pipeline for multimodal DR staging with a
//! quality-deferral stage. One subcommand per pipeline step; every step is
//! deterministic under `--seed` and writes its outputs atomically.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ConfigFile;

#[derive(Parser)]
#[command(
    name = "retstage",
    about = "Multimodal diabetic-retinopathy staging with quality-based deferral",
    version
)]
struct Cli {
    /// Global RNG seed (beats the config-file `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Flat key=value config file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// On failure, print a machine-readable error JSON to stderr
    #[arg(long, global = true)]
    error_json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: CSV, image embeddings, PPM images
    Synth(commands::synth::SynthArgs),
    /// Clean, split, and standardize a raw CSV into a dataset file
    Prep(commands::prep::PrepArgs),
    /// Produce image or fused embeddings from PPM images
    Embed(commands::embed::EmbedArgs),
    /// Generate low-quality (adversarial) copies of sampled images
    Perturb(commands::perturb::PerturbArgs),
    /// Train the 17-feature tabular baseline
    TrainTabular(commands::train::TrainTabularArgs),
    /// Train a fusion strategy with stratified k-fold cross-validation
    TrainFusion(commands::train::TrainFusionArgs),
    /// Train the contrastive quality-deferral network
    TrainDeferral(commands::train::TrainDeferralArgs),
    /// Score fused embeddings and emit accept/defer verdicts
    Score(commands::score::ScoreArgs),
    /// Project embeddings to 2-D with exact t-SNE
    Tsne(commands::tsne_cmd::TsneArgs),
    /// Aggregate metrics files into a markdown + JSON report
    Report(commands::report::ReportArgs),
}

pub struct Ctx {
    pub cfg: ConfigFile,
    pub seed: u64,
}

fn run(cli: Cli) -> retstage::Result<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = config::resolve(cli.seed, &cfg, "seed", 42)?;
    let ctx = Ctx { cfg, seed };
    match cli.command {
        Command::Synth(args) => commands::synth::run(&ctx, args),
        Command::Prep(args) => commands::prep::run(&ctx, args),
        Command::Embed(args) => commands::embed::run(&ctx, args),
        Command::Perturb(args) => commands::perturb::run(&ctx, args),
        Command::TrainTabular(args) => commands::train::run_tabular(&ctx, args),
        Command::TrainFusion(args) => commands::train::run_fusion(&ctx, args),
        Command::TrainDeferral(args) => commands::train::run_deferral(&ctx, args),
        Command::Score(args) => commands::score::run(&ctx, args),
        Command::Tsne(args) => commands::tsne_cmd::run(&ctx, args),
        Command::Report(args) => commands::report::run(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let error_json = cli.error_json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if error_json {
                let kind = match &err {
                    retstage::Error::Dimension(_) => "dimension",
                    retstage::Error::Config(_) => "config",
                    retstage::Error::Data(_) => "data",
                    retstage::Error::Format { .. } => "format",
                    retstage::Error::UnknownId(_) => "unknown_id",
                    retstage::Error::NonFinite(_) => "non_finite",
                    retstage::Error::Io { .. } => "io",
                    retstage::Error::Json(_) => "json",
                    retstage::Error::Csv(_) => "csv",
                };
                eprintln!(
                    "{}",
                    serde_json::json!({ "error": { "kind": kind, "message": err.to_string() } })
                );
            } else {
                eprintln!("error: {err}");
            }
            ExitCode::FAILURE
        }
    }
}
