//! Library face of the `inkrec` binary: argument parsing, dispatch, exit
//! codes.
//!
//! `inkrec` drives the full writer-recognition pipeline from the shell:
//!
//! - `synth` writes a deterministic synthetic ink corpus,
//! - `train-catalogue` fits the per-word, per-channel stroke-prototype maps,
//! - `eval` enrols models, scores probes and emits a JSON report,
//! - `stats` compares paired distance files across phases.
//!
//! Exit codes: 0 = report fully written, 1 = usage error, 2 = data error,
//! 3 = internal error.

pub mod config;
pub mod error;
pub mod protocol;

use std::path::PathBuf;

use clap::Parser;
use inkrec_core::atdr::SomParams;
use inkrec_core::synth::{FatigueModel, StyleParams, SynthParams};

use config::{Cli, Command};
use error::{CliError, CliResult};

/// Parse `std::env::args`, run the requested command, and return the process
/// exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version print to stdout and exit 0; real parse
            // errors print to stderr and are usage errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(args) => {
            let params = SynthParams {
                n_writers: args.writers,
                seed: args.seed,
                fatigue: args.fatigue,
                style: StyleParams {
                    position_noise: args.noise,
                    style_spread: args.spread,
                    ..StyleParams::default()
                },
                fatigue_model: FatigueModel::default(),
            };
            let n = protocol::run_synth(&args.root, &params)?;
            println!("wrote {n} records under {}", args.root.display());
            Ok(())
        }
        Command::TrainCatalogue(args) => {
            if args.grid < 2 {
                return Err(CliError::Usage(format!(
                    "--grid must be at least 2, got {}",
                    args.grid
                )));
            }
            if args.resample < 4 {
                return Err(CliError::Usage(format!(
                    "--resample must be at least 4, got {}",
                    args.resample
                )));
            }
            if args.epochs < 1 {
                return Err(CliError::Usage("--epochs must be at least 1".into()));
            }
            let out_dir = args.out.clone().unwrap_or_else(|| args.root.join("catalogues"));
            let som = SomParams {
                grid: args.grid,
                resample: args.resample,
                epochs: args.epochs,
                seed: args.seed,
                ..SomParams::default()
            };
            let paths = protocol::run_train_catalogue(&args.root, &out_dir, &som)?;
            println!("wrote {} catalogues to {}", paths.len(), out_dir.display());
            Ok(())
        }
        Command::Eval(args) => {
            let config = config::resolve_eval(&args)?;
            let json = protocol::run_eval(&config)?;
            emit(&config.out, &json)
        }
        Command::Stats(args) => {
            let json = protocol::run_stats(&args.files, args.replicates, args.seed)?;
            emit(&args.out, &json)
        }
    }
}

/// Write the report where the run asked for it: a file via `--out`, stdout
/// otherwise. Exit code 0 means this succeeded.
fn emit(out: &Option<PathBuf>, json: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir).map_err(|e| {
                        CliError::Data(format!("cannot create {}: {e}", dir.display()))
                    })?;
                }
            }
            std::fs::write(path, json)
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}
