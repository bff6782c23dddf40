use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use osmnav::synth::{generate, SynthConfig};
use tracing_subscriber::EnvFilter;

mod config;
mod encode;
mod records;
mod run;
mod score;

#[derive(Debug, Parser)]
#[command(
    name = "osmnav",
    version,
    about = "Batch evaluation of instruction-following agents on street graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run a policy over a dataset and write results.
    Run(run::RunArgs),
    /// Recompute the summary of a finished run, optionally against ratings.
    Score(score::ScoreArgs),
    /// Print the prompt for one step along the reference route.
    Encode(encode::EncodeArgs),
    /// Write a synthetic street-grid dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
}

fn synth(args: SynthArgs) -> Result<()> {
    let doc = generate(&SynthConfig {
        instances: args.instances,
        seed: args.seed,
        rows: args.rows,
        cols: args.cols,
        ..SynthConfig::default()
    });
    fs::write(&args.out, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} instances to {}", doc.instances.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Score(a) => score::cmd_score(a),
        Command::Encode(a) => encode::cmd_encode(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
