//! `condquant`: train conditional quantizer networks and export their
//! output as CSV.

mod commands;
mod error;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalOracleArgs, Law, Relation, TrainArgs};
use condquant::fmt17;
use error::CliError;

#[derive(Parser)]
#[command(name = "condquant", version, about = "Deep conditional measure quantization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from an experiment spec (TOML).
    Train {
        spec: PathBuf,
        /// Overrides the spec's seed and CONDQUANT_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the spec's out_dir, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the Q points of a trained model at given conditions.
    Quantize {
        checkpoint: PathBuf,
        /// Condition as comma-separated values; repeat for several.
        #[arg(long = "x", required = true, allow_hyphen_values = true)]
        x: Vec<String>,
        /// CSV file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare a 1D model with the quantile quantizer of a known law.
    EvalOracle {
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        law: Law,
        /// `mean,std` for normal, `low,high` for uniform (default 0,1).
        #[arg(long, allow_hyphen_values = true)]
        law_params: Option<String>,
        /// Conditions as `min:max:count`.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long, value_enum, default_value = "additive")]
        relation: Relation,
        /// CSV file (default: stdout, with the summary on stderr).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sample the quantizer of a model with n_x = 2 over a rectangular grid.
    Surface {
        checkpoint: PathBuf,
        /// `min:max:count`, once for x_1 and once for x_2.
        #[arg(long, allow_hyphen_values = true)]
        grid: Vec<String>,
        /// CSV file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { spec, seed, out } => commands::train(&TrainArgs {
            spec_path: &spec,
            seed,
            out: out.as_deref(),
            env_seed: std::env::var("CONDQUANT_SEED").ok(),
        }),
        Command::Quantize { checkpoint, x, output } => commands::quantize(&checkpoint, &x, output.as_deref()),
        Command::EvalOracle {
            checkpoint,
            law,
            law_params,
            grid,
            relation,
            output,
        } => {
            let summary = commands::eval_oracle(&EvalOracleArgs {
                checkpoint: &checkpoint,
                law,
                law_params: law_params.as_deref(),
                grid: &grid,
                relation,
                out: output.as_deref(),
            })?;
            let line = format!(
                "max_abs_err={} mean_abs_err={}",
                fmt17(summary.max_abs_err),
                fmt17(summary.mean_abs_err)
            );
            if output.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
            Ok(())
        }
        Command::Surface {
            checkpoint,
            grid,
            output,
        } => commands::surface(&checkpoint, &grid, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
