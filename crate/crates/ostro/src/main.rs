//! `ostro`: derive, simulate and check higher-order Lagrangian systems
//! described by JSON system files.
//!
//! Exit codes: 0 success, 1 a check failed, 2 invalid input, 3 runtime
//! singularity.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{action, derive, simulate, unified, verify};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ostro", version, about = "Higher-order Lagrangian mechanics: derivations, simulation and checks")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for point checks and variation batches (0: all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Indent JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    /// Write the primary output here instead of stdout (the CSV for
    /// `simulate`, the report otherwise).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Momenta, Euler–Lagrange equations, Hessian, Ĥ and a regularity scan.
    Derive(derive::DeriveArgs),
    /// Integrate from an initial jet (or unified point) and write a CSV.
    Simulate(simulate::SimulateArgs),
    /// Check a trajectory CSV against the equations of motion.
    Verify(verify::VerifyArgs),
    /// Stationarity of the action under seeded bump variations.
    ActionCheck(action::ActionArgs),
    /// Constraint residuals and the kernel solve at points of W_r.
    UnifiedCheck(unified::UnifiedArgs),
}

/// Options shared by every command.
pub struct Global {
    pub seed: u64,
    pub pretty: bool,
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OSTRO_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        log::warn!("thread pool: {e}");
    }
    let global = Global { seed: cli.seed, pretty: cli.pretty, out: cli.out };
    let result = match &cli.command {
        Command::Derive(a) => derive::run(a, &global),
        Command::Simulate(a) => simulate::run(a, &global),
        Command::Verify(a) => verify::run(a, &global),
        Command::ActionCheck(a) => action::run(a, &global),
        Command::UnifiedCheck(a) => unified::run(a, &global),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Runtime { last_good: Some(t), .. } = &e {
                eprintln!("last good time: {t}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
