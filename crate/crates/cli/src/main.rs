mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Map-label toolkit: synthetic corpora, feature masks, entropy filtering,
/// polygon-level evaluation, label augmentation, density reports,
/// feature-weighted loss checks, and decentralized SGD simulation.
#[derive(Parser)]
#[command(name = "tilelab", version, about)]
struct Cli {
    /// JSON config file; flags override its values, defaults fill the rest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for per-tile parallelism; 1 forces serial execution.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired corpus with a truth manifest.
    Synth(commands::SynthArgs),
    /// Extract a feature mask (and optionally polygons) from a map tile.
    Mask(commands::MaskArgs),
    /// Partition tiles by pixel-histogram entropy.
    Filter(commands::FilterArgs),
    /// Score generated maps against ground-truth maps at the polygon level.
    Eval(commands::EvalArgs),
    /// Merge false-positive detections back into training labels.
    Augment(commands::AugmentArgs),
    /// Report feature density and completeness for a map directory.
    Density(commands::DensityArgs),
    /// Run the cycle loss on a paired tile and verify its gradient.
    LossCheck(commands::LossCheckArgs),
    /// Simulate decentralized SGD with random-partner averaging.
    DpsgdSim(commands::DpsgdSimArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if let Err(error) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
        {
            eprintln!(
                "{}",
                serde_json::json!({ "error": format!("thread pool: {error}") })
            );
            return ExitCode::FAILURE;
        }
    }

    let config = match config::ToolConfig::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(error) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{error:#}") }));
            return ExitCode::FAILURE;
        }
    };

    let outcome = match cli.command {
        Command::Synth(args) => commands::synth(args, &config),
        Command::Mask(args) => commands::mask(args, &config),
        Command::Filter(args) => commands::filter(args, &config),
        Command::Eval(args) => commands::eval(args, &config),
        Command::Augment(args) => commands::augment(args, &config),
        Command::Density(args) => commands::density(args, &config),
        Command::LossCheck(args) => commands::loss_check(args, &config),
        Command::DpsgdSim(args) => commands::dpsgd_sim(args, &config),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            // Machine-readable error channel: one JSON object on stderr.
            eprintln!("{}", serde_json::json!({ "error": format!("{error:#}") }));
            ExitCode::FAILURE
        }
    }
}
