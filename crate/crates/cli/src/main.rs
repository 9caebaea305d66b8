//! kzq: defect scaling for quenched ion chains.
//!
//! Subcommands drive the extended-formulation predictor, the Langevin
//! simulator, tau_q sweeps with power-law fits, and protocol comparisons.
//! Configuration is strict JSON (see README for the schema); outputs are
//! JSON/CSV files keyed by the config hash. Everything runs in the natural
//! unit system (mass = coulomb coupling = 1).

mod commands;
mod config;
#[macro_use]
mod logging;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use kzq_core::Real;
use output::OutputSink;

#[derive(Parser)]
#[command(
    name = "kzq",
    about = "Defect-density prediction and Langevin simulation for quenched ion chains",
    long_about = "Defect-density prediction and Langevin simulation for quenched ion chains.\n\
                  All quantities use the natural unit system (ion mass = Coulomb coupling = 1);\n\
                  every output embeds the unit system and the config hash. Set KZQ_LOG to\n\
                  error|warn|info|debug to control stderr logging.",
    version
)]
struct Cli {
    /// Path to the strict-JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the simulator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for ensembles and sweeps (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory (overrides the config's `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the defect predictor on a protocol and parameter set.
    Predict,
    /// Run one stochastic trajectory and count kinks.
    Simulate {
        /// Dump trajectory frames (t, positions, velocities) at the
        /// configured stride.
        #[arg(long)]
        dump_trajectory: bool,
    },
    /// Sweep tau_q and emit CSV/JSON/plot data.
    Sweep {
        /// Fit range `min:max` for a power-law fit over the sweep.
        #[arg(long, value_parser = parse_range)]
        fit_range: Option<(Real, Real)>,
    },
    /// Compare kink production of two protocols at equal duration.
    Compare,
}

fn parse_range(s: &str) -> Result<(Real, Real), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| "expected `min:max`".to_string())?;
    let a: Real = a.parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let b: Real = b.parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if b <= a {
        return Err("upper bound must exceed lower bound".into());
    }
    Ok((a, b))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("worker pool already initialized")?;
    }
    let config_path = cli.config.context("--config <path> is required")?;
    let config = RunConfig::load(&config_path)?;

    let dir = cli
        .out
        .as_ref()
        .map(|p| p.to_string_lossy().into_owned())
        .unwrap_or_else(|| config.output_dir().to_string());
    let hash = commands::config_hash(&config);
    let mut sink = OutputSink::new(&dir, &hash)?;
    info!("config {} -> outputs in {dir} (hash {hash})", config_path.display());

    match cli.command {
        Command::Predict => commands::cmd_predict(&config, &mut sink)?,
        Command::Simulate { dump_trajectory } => {
            commands::cmd_simulate(&config, &mut sink, cli.seed, dump_trajectory)?
        }
        Command::Sweep { fit_range } => commands::cmd_sweep(&config, &mut sink, fit_range)?,
        Command::Compare => commands::cmd_compare(&config, &mut sink)?,
    }
    output::announce(sink.written());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            logging::log(logging::Level::Error, &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
