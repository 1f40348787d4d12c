//! `wfstack`: runs the walk-forward stacking pipeline stage by stage inside a
//! run directory.

mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wfstack::config::RunConfig;
use wfstack::ensemble::EnsembleMode;

#[derive(Parser)]
#[command(name = "wfstack", version, about = "Walk-forward stacking backtester for weekly stock returns")]
struct Cli {
    /// Run manifest.
    #[arg(long, short, global = true, default_value = "wfstack.toml")]
    config: PathBuf,
    /// Run directory; overrides `output` in the manifest.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repair, reconcile and filter the raw bars into clean daily series.
    Ingest,
    /// Build the weekly feature table from the clean series.
    Features,
    /// Score news keywords against company names and link articles.
    Link,
    /// Fit every model walk-forward and write the prediction table.
    Backtest {
        /// Serialize every fitted model under `<run>/models`.
        #[arg(long)]
        save_models: bool,
        /// Comma-separated model ids to run instead of the full list.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Stack the base predictions and build the index ensemble.
    Ensemble {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Compute metrics, threshold and slope reports.
    Report {
        #[arg(long, allow_negative_numbers = true)]
        threshold_up: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        threshold_down: Option<f64>,
    },
    /// Write a seeded synthetic universe with a manifest.
    Synth {
        /// Output directory.
        #[arg(long, default_value = "synth")]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        stocks: usize,
        #[arg(long, default_value_t = 8)]
        years: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Pooled,
    PerStock,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(dir) = &cli.run_dir {
        config.output = dir.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Synth { out, stocks, years, seed } = &cli.command {
        return stages::synth(out, *stocks, *years, *seed);
    }
    let mut config = load_config(&cli)?;
    std::fs::create_dir_all(&config.output)
        .with_context(|| format!("creating run directory {}", config.output.display()))?;
    match cli.command {
        Command::Ingest => stages::ingest(&config),
        Command::Features => stages::features(&config),
        Command::Link => stages::link(&config),
        Command::Backtest { save_models, models } => {
            if !models.is_empty() {
                config.select_models(&models)?;
            }
            stages::backtest(&config, save_models)
        }
        Command::Ensemble { mode } => {
            if let Some(m) = mode {
                config.ensemble.mode = match m {
                    Mode::Pooled => EnsembleMode::Pooled,
                    Mode::PerStock => EnsembleMode::PerStock,
                };
            }
            stages::ensemble(&config)
        }
        Command::Report { threshold_up, threshold_down } => {
            if let Some(t) = threshold_up {
                config.report.threshold_up = t;
            }
            if let Some(t) = threshold_down {
                config.report.threshold_down = t;
            }
            stages::report(&config)
        }
        Command::Synth { .. } => unreachable!("handled above"),
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
