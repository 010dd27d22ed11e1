//! `bgmac` — rate limits of bosonic Gaussian multiple-access channels.
//!
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 unphysical
//! channel, 4 optimizer non-convergence (output is still written).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Outcome, RunArgs};
use config::ConfigError;
use output::Format;

#[derive(Parser, Debug)]
#[command(name = "bgmac", version, about = "Capacity bounds and rate regions of bosonic Gaussian multiple-access channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Number of rays for `gaussian-region`.
    #[arg(long, global = true, default_value_t = 20)]
    rays: usize,

    /// Seed for optimizer random starts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Add truncated-Fock cross-check columns (single-sender thermal loss).
    #[arg(long, global = true)]
    oracle: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Single-sender EA capacity, CM rate and coherent rate.
    PointCapacity,
    /// Coherent-state rate caps for every sender set.
    CoherentRegion,
    /// Unassisted and EA outer bounds.
    OuterBounds,
    /// EA total rate against the coherent-state total rate.
    EaTotal,
    /// Gaussian-encoding rate region by ray optimization.
    GaussianRegion,
    /// Causal memory channel total rates.
    Memory,
    /// Compare the Gaussian rate with a truncated-Fock computation.
    OracleCheck,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<bgmac::Error>() {
            return match e {
                bgmac::Error::InvalidArgument(_)
                | bgmac::Error::NotSymmetric(_)
                | bgmac::Error::ShapeMismatch { .. }
                | bgmac::Error::TooManySenders(..) => 2,
                bgmac::Error::UnphysicalChannel(_)
                | bgmac::Error::UnphysicalState { .. }
                | bgmac::Error::NoBoundAvailable => 3,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let config = cli
        .config
        .ok_or_else(|| ConfigError("--config <path.json> is required".into()))?;
    let args = RunArgs {
        config,
        out: cli.out,
        format: cli.format,
        rays: cli.rays,
        seed: cli.seed,
        oracle: cli.oracle,
    };
    match cli.command {
        Command::PointCapacity => commands::point_capacity(&args),
        Command::CoherentRegion => commands::coherent_region(&args),
        Command::OuterBounds => commands::outer_bounds(&args),
        Command::EaTotal => commands::ea_total(&args),
        Command::GaussianRegion => commands::gaussian_region(&args),
        Command::Memory => commands::memory(&args),
        Command::OracleCheck => commands::oracle_check(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(4)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
