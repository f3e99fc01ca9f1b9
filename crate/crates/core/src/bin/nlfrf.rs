use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlfrf::cli::{cmd_converge_check, cmd_frf, cmd_simulate, cmd_tune, RunArgs};

/// Nonlinear FRF sweeps and adaptive PD vibration tuning.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the excitation grid and write one FRF CSV per channel.
    Frf(RunArgs),
    /// Tune PD gains until the FRF norms meet their targets.
    Tune(RunArgs),
    /// Time responses with and without the PD term.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Gains JSON as written by `tune`.
        #[arg(long)]
        gains: Option<PathBuf>,
    },
    /// Jacobian diagnostics and multi-initial-condition convergence.
    ConvergeCheck(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Frf(a) => cmd_frf(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Simulate { run, gains } => cmd_simulate(run, gains.as_deref()),
        Command::ConvergeCheck(a) => cmd_converge_check(a),
    };
    ExitCode::from(code as u8)
}
