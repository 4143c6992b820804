//! `rydkick`: Rydberg wave packet kick simulations from a TOML scenario.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical or truncation
//! error, 1 anything else (I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rydkick_core::pipeline::{run, Command, RunOptions};
use rydkick_core::Error;

#[derive(Debug, Parser)]
#[command(name = "rydkick", version, about = "Rydberg wave packet + half-cycle pulse kick simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `scan.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat post-kick norm deviations as errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Basis table and radial-solver diagnostics.
    Basis(Common),
    /// Kick operator matrix and unitarity report.
    Kick(Common),
    /// Shot ensemble, correlations and pair fits over the reference delays.
    Scan(Common),
    /// Pair amplitudes and phases versus HCP delay, with and without the kick.
    HcpScan(Common),
    /// Correlations and fits of an existing ensemble CSV.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Ensemble CSV; defaults to ensemble.csv in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain { .. } | Error::BasisMismatch(_) | Error::InvalidPacket(_) => 2,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, common, input) = match cli.command {
        Cmd::Basis(c) => (Command::Basis, c, None),
        Cmd::Kick(c) => (Command::Kick, c, None),
        Cmd::Scan(c) => (Command::Scan, c, None),
        Cmd::HcpScan(c) => (Command::HcpScan, c, None),
        Cmd::Analyze { common, input } => (Command::Analyze, common, input),
    };
    let opts = RunOptions {
        config_path: common.config,
        seed: common.seed,
        out_dir: common.out,
        strict: common.strict,
        input,
    };
    match run(command, &opts) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rydkick {}: {e}", command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
