//! `tva` — tactic volatility prediction and decision pipeline.
//!
//! Five subcommands cover the full experiment loop: `synth` and `collect`
//! produce trace CSVs, `train` fits a predictor, `simulate` drives the
//! utility-threshold adaptation loop over the validation span, and
//! `evaluate` turns outcome files into a metrics report.

mod commands;
mod config;
mod model_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ModelKind;

/// Exit codes: 0 success, 2 usage or input error, 1 runtime failure.
#[derive(Debug)]
pub struct CliError {
    message: String,
    usage: bool,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            usage: true,
        }
    }

    pub fn runtime(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            usage: false,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tva",
    version,
    about = "Tactic volatility prediction and decision toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tactic trace CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        length: Option<usize>,
        /// URT channel mode: none, informative or pure_noise.
        #[arg(long)]
        urt_mode: Option<String>,
        /// Tactic source label recorded in the trace.
        #[arg(long)]
        source: Option<String>,
    },
    /// Probe a live target repeatedly, appending records to a trace CSV.
    Collect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        target_url: Option<String>,
        #[arg(long)]
        ping_target: Option<String>,
    },
    /// Prepare a trace and train the selected model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        /// Model kind; overrides the config.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Search-log CSV destination (evolved models only); defaults to
        /// `<model-out>.log.csv`.
        #[arg(long)]
        log_out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the adaptation loop over the validation span of a trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Saved model to drive predictions; omit with --oracle.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Use the perfect-information oracle instead of a model.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute metrics over one or more outcome files and write a report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(required = true)]
        outcomes: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            config,
            out,
            seed,
            length,
            urt_mode,
            source,
        } => commands::synth(&config, &out, seed, length, urt_mode.as_deref(), source),
        Command::Collect {
            config,
            out,
            count,
            target_url,
            ping_target,
        } => commands::collect(&config, &out, count, target_url, ping_target),
        Command::Train {
            config,
            trace,
            model_out,
            model,
            log_out,
            seed,
        } => commands::train(&config, &trace, &model_out, model, log_out.as_deref(), seed),
        Command::Simulate {
            config,
            trace,
            model,
            oracle,
            out,
        } => commands::simulate(&config, &trace, model.as_deref(), oracle, &out),
        Command::Evaluate {
            config,
            report,
            outcomes,
        } => commands::evaluate(&config, &report, &outcomes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tva: {}", e.message);
            if e.usage {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
