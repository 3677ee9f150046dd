//! `tfa` — train, project, synthesize, benchmark, and inspect multilinear
//! factor analysis models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{exit_code_for, TrainOverrides, EXIT_VALIDATION};
use tfa_core::factorization::Schedule;

#[derive(Parser)]
#[command(name = "tfa", version, about = "Multilinear (tensor) factor analysis toolkit")]
struct Cli {
    /// Threads for the parallel paths (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic causal-factor grid (data.mten + truth model).
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the spec seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model from a .mten tensor; writes the model directory and a
    /// report.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// sequential | parallel | async
        #[arg(long)]
        schedule: Option<Schedule>,
        /// svd | hebbian
        #[arg(long)]
        engine: Option<String>,
        /// Seed for the hebbian engine.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-mode kernel override, e.g. --kernel "1=rbf:sigma=1.0"
        /// (repeatable).
        #[arg(long = "kernel")]
        kernels: Vec<String>,
    },
    /// Project an observation into the causal factor spaces.
    Project {
        /// Model directory (single-model projection).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Ensemble manifest JSON (piecewise projection with gating).
        #[arg(long)]
        ensemble: Option<PathBuf>,
        /// Observation as a column-vector CSV.
        #[arg(long)]
        input: PathBuf,
        /// als-cp | m-mode-svd
        #[arg(long, default_value = "als-cp")]
        method: String,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare flat and hierarchical training; writes a CSV timing table.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a saved model's metadata.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not size the thread pool: {err}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    }
    let result = match &cli.command {
        Command::Synth { config, out, seed } => commands::cmd_synth(config, out, *seed),
        Command::Train { config, out, schedule, engine, seed, kernels } => {
            let parsed: Result<Vec<_>, _> =
                kernels.iter().map(|k| config::parse_kernel_flag(k)).collect();
            match parsed {
                Ok(kernels) => {
                    let overrides = TrainOverrides {
                        schedule: *schedule,
                        engine: engine.clone(),
                        seed: *seed,
                        kernels,
                    };
                    commands::cmd_train(config, out, &overrides)
                }
                Err(err) => Err(err),
            }
        }
        Command::Project { model, ensemble, input, method, out } => commands::cmd_project(
            model.as_deref(),
            ensemble.as_deref(),
            input,
            method,
            out.as_deref(),
        ),
        Command::Bench { config, out } => commands::cmd_bench(config, out),
        Command::Inspect { model } => commands::cmd_inspect(model),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
