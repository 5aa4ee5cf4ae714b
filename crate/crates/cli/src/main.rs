//! Command-line front end: optimal barriers, valuations, parameter sweeps,
//! the two-stage leverage problem and Monte Carlo cross-checks.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_toft::SimConfig;

use crate::config::{RunConfig, SweepSpec, SweepVariable};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "levy-toft", version, about = "Optimal bankruptcy barriers under Levy asset dynamics")]
struct Cli {
    /// TOML run configuration; the bundled reference set when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV destination; overrides `output.csv`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Seed for the Monte Carlo generator.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Use the configured drift even if the file asks for calibration.
    #[arg(long, global = true)]
    no_calibrate: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the optimal bankruptcy barrier.
    Barrier,
    /// Firm, debt and equity values at one asset value.
    Value {
        #[arg(long)]
        asset_value: Option<f64>,
        /// Barrier to value at; the optimal one when omitted.
        #[arg(long)]
        barrier: Option<f64>,
    },
    /// Values along a grid of one parameter.
    Sweep {
        /// lambda | jump_rate | V_B | P | V
        #[arg(long)]
        variable: Option<String>,
        /// Comma-separated grid.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Vec<f64>,
    },
    /// Optimal debt level when the barrier is chosen after the debt.
    TwoStage {
        #[arg(long)]
        asset_value: Option<f64>,
    },
    /// Monte Carlo estimates next to the closed forms.
    Simulate {
        #[arg(long)]
        asset_value: Option<f64>,
        #[arg(long)]
        barrier: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
    },
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::reference(),
    };
    if cli.no_calibrate {
        cfg.model.calibrate = false;
    }
    let out = cli.out.clone().or_else(|| cfg.output.csv.as_ref().map(PathBuf::from));
    let out = out.as_deref();
    let asset_value = |v: Option<f64>| v.unwrap_or(cfg.output.asset_value);
    match cli.command {
        Command::Barrier => print!("{}", commands::barrier(&cfg)?),
        Command::Value { asset_value: v, barrier } => {
            commands::value_row(&cfg, asset_value(v), barrier, out)?
        }
        Command::Sweep { variable, grid } => {
            let spec = match (variable, grid.is_empty()) {
                (Some(name), false) => SweepSpec { variable: SweepVariable::parse(&name)?, grid },
                (None, true) => cfg.output.sweep.clone().ok_or_else(|| {
                    CliError::Config("no sweep given: pass --variable and --grid or set output.sweep".into())
                })?,
                _ => return Err(CliError::Config("--variable and --grid go together".into())),
            };
            commands::sweep(&cfg, &spec, out)?
        }
        Command::TwoStage { asset_value: v } => commands::two_stage_row(&cfg, asset_value(v), out)?,
        Command::Simulate { asset_value: v, barrier, paths } => {
            let mut sim = SimConfig::default().with_paths(paths);
            if let Some(seed) = cli.seed {
                sim = sim.with_seed(seed);
            }
            commands::simulate(&cfg, asset_value(v), barrier, &sim, out)?
        }
        Command::ShowConfig => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
