//! Batch entry point for the two-bubble laboratory: identity verification,
//! two-bubble evolution with modulation tracking, shooting selection, and
//! rate-fit reports over previous runs.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "twobubble", version, about = "two-bubble dynamics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the static identity suite and write a JSON report
    Verify(CommonArgs),
    /// Evolve the two-bubble ansatz over the configured window and track it
    Evolve(CommonArgs),
    /// Bisection shooting over the instability parameter
    Shoot(CommonArgs),
    /// Aggregate fitted concentration rates from a run directory
    Report {
        /// run directory holding manifest.json and tracks/
        dir: String,
    },
}

#[derive(clap::Args)]
struct CommonArgs {
    /// plain-text key = value configuration file
    #[arg(long)]
    config: Option<String>,
    /// override the configured model id (nlw6 | ym4 | wm:k)
    #[arg(long)]
    model: Option<String>,
    /// output directory
    #[arg(long)]
    out: Option<String>,
    /// seed for all randomness in the run
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads for independent candidate runs
    #[arg(long)]
    threads: Option<usize>,
}

fn load_config(args: &CommonArgs) -> anyhow::Result<config::RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            config::RunConfig::parse(&text)?
        }
        None => config::RunConfig::default(),
    };
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    if let Some(o) = &args.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t.max(1);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify(args) => load_config(&args).map(commands::cmd_verify),
        Command::Evolve(args) => load_config(&args).map(commands::cmd_evolve),
        Command::Shoot(args) => load_config(&args).map(commands::cmd_shoot),
        Command::Report { dir } => Ok(commands::cmd_report(&dir)),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("configuration error: {err:#}");
            ExitCode::from(2)
        }
    }
}
