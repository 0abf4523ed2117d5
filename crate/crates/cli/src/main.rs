//! `fosls`: train auxiliary functions, solve a benchmark, evaluate results.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{parse_fix, parse_range, EvalArgs, GridSpec};
use crate::config::{AuxMode, Overrides, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "fosls", version, about = "Least-squares neural PDE solver with boundary conditions imposed by construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the auxiliary functions (analytic markers or trained checkpoints).
    AuxTrain {
        #[command(flatten)]
        common: Common,
        /// Training steps per auxiliary network.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train the main networks and write checkpoints and the loss history.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate a solution on a grid or a slice and write a CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory holding v.json and psi.json (default: the output directory).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Grid points per free axis.
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Fix an axis, e.g. `--fix x3=0.5`; repeatable.
        #[arg(long, value_parser = parse_fix)]
        fix: Vec<(usize, f64)>,
        /// Restrict an axis, e.g. `--range x1=-1:0`; repeatable.
        #[arg(long, value_parser = parse_range)]
        range: Vec<(usize, f64, f64)>,
        /// Evaluate the closed-form solution instead of checkpoints.
        #[arg(long)]
        exact: bool,
        /// CSV path (default: <out>/eval.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for the loss reduction.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Benchmark: example1, example2 or remark1d.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum)]
    aux_mode: Option<AuxMode>,
}

impl Common {
    fn load(&self, steps: Option<usize>, aux_steps: Option<usize>) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            steps,
            aux_steps,
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            problem: self.problem.clone(),
            dim: self.dim,
            k: self.k,
            eps: self.eps,
            aux_mode: self.aux_mode,
        };
        let cfg = RunConfig::load(self.config.as_deref(), &overrides)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| CliError::config(format!("workers: {e}")))?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::AuxTrain { common, steps } => commands::aux_train(&common.load(None, steps)?),
        Command::Solve { common, steps } => commands::solve(&common.load(steps, None)?),
        Command::Eval { common, checkpoints, points, fix, range, exact, output } => {
            let args = EvalArgs { checkpoints, exact, output, grid: GridSpec { points, fixed: fix, ranges: range } };
            commands::eval(&common.load(None, None)?, &args)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
