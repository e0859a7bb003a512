//! Command-line front end for the federated HPC simulator.
//!
//! All behavior lives in the library (`fedhpc_sim::commands`); this file only
//! maps flags onto the command option structs and turns errors into exit
//! codes: 0 success, 2 usage or configuration error, 3 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedhpc_sim::commands::{self, CompareOpts, OutputFormat, SimulateOpts};
use fedhpc_sim::CliError;

#[derive(Parser)]
#[command(
    name = "fedhpc-sim",
    version,
    about = "Deterministic discrete-event simulator for federated learning across HPC facilities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (or a seed sweep) and write metrics artifacts.
    Simulate {
        /// Scenario config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured algorithm (fedavg, fedasync, fedbuff, fedcompass).
        #[arg(long)]
        algorithm: Option<String>,
        /// Override the RNG seed; beats FEDHPC_SIM_SEED, which beats the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the full event trace to events.csv.
        #[arg(long)]
        trace: bool,
        /// Overwrite existing output files.
        #[arg(long)]
        force: bool,
        /// Run N consecutive seeds starting at the effective seed.
        #[arg(long, value_name = "N")]
        sweep_seeds: Option<u64>,
        /// Worker threads for sweeps (default: available cores, capped at 8).
        #[arg(long, value_name = "K")]
        jobs: Option<usize>,
        /// Summary file format: summary.txt (structured-text) or summary.csv.
        #[arg(long, value_enum, default_value = "structured-text")]
        format: OutputFormat,
    },
    /// Run several algorithms under identical conditions and tabulate them.
    Compare {
        /// Scenario config file.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated algorithms to compare (default: all four).
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
        /// Override the RNG seed; beats FEDHPC_SIM_SEED, which beats the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write per-algorithm event traces.
        #[arg(long)]
        trace: bool,
        /// Overwrite existing output files.
        #[arg(long)]
        force: bool,
        /// Compare across N consecutive seeds instead of one.
        #[arg(long, value_name = "N")]
        sweep_seeds: Option<u64>,
        /// Worker threads (default: available cores, capped at 8).
        #[arg(long, value_name = "K")]
        jobs: Option<usize>,
    },
    /// Evaluate the config's calibration anchors and print PASS/FAIL lines.
    CalibrateCheck {
        /// Scenario config file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the shipped scenario files, byte-for-byte.
    EmitDefaults {
        /// Directory to write the scenario files into.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
}

fn seed_env() -> Option<String> {
    std::env::var("FEDHPC_SIM_SEED").ok()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            algorithm,
            seed,
            out,
            trace,
            force,
            sweep_seeds,
            jobs,
            format,
        } => {
            let seed = commands::resolve_seed(seed, seed_env().as_deref())?;
            commands::simulate(&SimulateOpts {
                config,
                algorithm,
                seed,
                out,
                trace,
                force,
                sweep_seeds,
                jobs,
                format,
            })
        }
        Command::Compare {
            config,
            algorithms,
            seed,
            out,
            trace,
            force,
            sweep_seeds,
            jobs,
        } => {
            let seed = commands::resolve_seed(seed, seed_env().as_deref())?;
            commands::compare(&CompareOpts {
                config,
                algorithms,
                seed,
                out,
                trace,
                force,
                sweep_seeds,
                jobs,
            })
        }
        Command::CalibrateCheck { config } => commands::calibrate_check(&config),
        Command::EmitDefaults { out, force } => commands::emit_defaults(&out, force),
    }
}

fn main() -> ExitCode {
    // clap itself exits 2 on usage errors, matching the config error code.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
