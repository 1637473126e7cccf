use std::path::PathBuf;
use std::process::ExitCode;

use cata_cli::{
    batch, run_assign, run_simulate, run_verify_bound, AssignArgs, BatchArgs, CliError, SimulateArgs, VerifyArgs,
    DEFAULT_SEED,
};
use cata_core::auction::Algorithm;
use clap::{Args, Parser, Subcommand};

/// Collision-aware task assignment: auctions, simulation and batch experiments.
#[derive(Parser)]
#[command(name = "cata", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed for every random draw.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Assign robots to tasks on one world.
    Assign {
        #[arg(long, default_value = "cata")]
        algo: Algorithm,
        /// Coordinate file or generator spec.
        #[arg(long)]
        world: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute an assignment artifact in the simulator.
    Simulate {
        /// Artifact written by `assign`.
        #[arg(long)]
        assignment: PathBuf,
        /// Per-step CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the CATA vs CBAA experiment batch.
    Batch {
        /// Output directory for rows.csv, summary.json and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Trials per cell, overriding the config.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Keep finished trials from an earlier run with the same manifest.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Compare CATA against the exact optimum on random instances.
    VerifyBound {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Assign { algo, world, common, out } => {
            run_assign(&AssignArgs { algorithm: algo, world, seed: common.seed, config: common.config, out })
        }
        Command::Simulate { assignment, trace, common, out } => {
            run_simulate(&SimulateArgs { assignment, trace, seed: common.seed, config: common.config, out })
        }
        Command::Batch { out, trials, jobs, resume, common } => {
            let summary = batch(&BatchArgs { out, trials, jobs, resume, seed: common.seed, config: common.config })?;
            for cell in &summary.cells {
                eprintln!(
                    "{:<8} {:<6} trials {:>4}  deadlocks {:>3}",
                    cell.cell, cell.algorithm, cell.trials, cell.deadlocks
                );
            }
            Ok(())
        }
        Command::VerifyBound { count, n_min, n_max, jobs, common, out } => {
            run_verify_bound(&VerifyArgs { count, n_min, n_max, jobs, seed: common.seed, config: common.config, out })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
