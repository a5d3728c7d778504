//! Command-line driver: full-order solves, reduced basis construction,
//! parameter sweeps, validation and export.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{Inputs, Status, SweepMode};
use config::{Overrides, RunConfig};

/// Exit status when the greedy loop stops short of its tolerance.
const EXIT_STALLED: u8 = 2;
/// Exit status when validation errors exceed the configured bound.
const EXIT_OUT_OF_TOLERANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "pbrom", version, about = "Regularized Poisson-Boltzmann solver with a reduced-basis surrogate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML file of settings; flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    set: Overrides,
}

impl Common {
    fn inputs(&self) -> Result<Inputs> {
        Inputs::load(RunConfig::resolve(self.config.as_deref(), &self.set)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Full-order solve at one ionic strength.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also solve the model with the other source treatment and
        /// report the far-field difference.
        #[arg(long)]
        compare: bool,
    },
    /// Greedy reduced basis and DEIM over the training range.
    BuildRom {
        #[command(flatten)]
        common: Common,
        /// Log the largest true error over the training set at each step.
        #[arg(long)]
        track_training_error: bool,
    },
    /// Reduced-order queries at given or random ionic strengths.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rom: PathBuf,
        /// Comma-separated ionic strengths.
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
        /// Number of random ionic strengths when no list is given.
        #[arg(long)]
        count: Option<usize>,
        /// Solve the full-order model too and report true errors.
        #[arg(long)]
        with_fom: bool,
    },
    /// Compare ROM and FOM at random ionic strengths.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rom: PathBuf,
    },
    /// Write the tables stored in a ROM file.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rom: PathBuf,
        /// Also reconstruct the potential at the configured ionic strength.
        #[arg(long)]
        potential: bool,
    },
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Solve { common, compare } => commands::solve(&common.inputs()?, compare),
        Command::BuildRom {
            common,
            track_training_error,
        } => commands::build_rom(&common.inputs()?, track_training_error),
        Command::Sweep {
            common,
            rom,
            mu,
            count,
            with_fom,
        } => commands::sweep(&common.inputs()?, &rom, SweepMode::Sweep { with_fom }, &mu, count),
        Command::Validate { common, rom } => commands::sweep(&common.inputs()?, &rom, SweepMode::Validate, &[], None),
        Command::Export {
            common,
            rom,
            potential,
        } => {
            if potential {
                let inputs = common.inputs()?;
                let output = inputs.config.output.clone();
                commands::export(&rom, Some(&inputs), &output)
            } else {
                let output = common.set.output.clone().unwrap_or_else(|| PathBuf::from("pbrom-out"));
                commands::export(&rom, None, &output)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Stalled) => ExitCode::from(EXIT_STALLED),
        Ok(Status::OutOfTolerance) => ExitCode::from(EXIT_OUT_OF_TOLERANCE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
