//! `enclosure`: simulate, invert and report time-domain enclosure experiments.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 an admissibility condition
//! fails or no radius could be extracted, 3 numerical failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use enclosure_core::oracle_suite::SuiteLevel;

use commands::{exit_code, Overrides, EXIT_OK, EXIT_OTHER};

#[derive(Parser)]
#[command(
    name = "enclosure",
    version,
    about = "Time-domain enclosure method for a hidden obstacle in a cavity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and its admissibility conditions without solving.
    Validate(ConfigArgs),
    /// Solve the forward problem and record the boundary trace.
    Simulate(ConfigArgs),
    /// Compute the indicator from a recorded trace and fit the radius.
    Invert {
        #[command(flatten)]
        config: ConfigArgs,
        /// Recorded measured trace.
        #[arg(long)]
        trace: PathBuf,
        /// Recorded obstacle-free trace; solved on the fly when omitted.
        #[arg(long)]
        companion: Option<PathBuf>,
    },
    /// Simulate and invert in one go.
    Run(ConfigArgs),
    /// Check the closed forms against independent evaluations.
    OracleSuite {
        #[arg(long, default_value = "quick")]
        level: SuiteLevel,
        /// Also write the report here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write plot.csv with (1/tau) ln I and the expected limit.
    EmitPlots {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    surface_order: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// "analytic" or "simulated".
    #[arg(long)]
    calibration: Option<String>,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    tau_max: Option<f64>,
    #[arg(long)]
    tau_count: Option<usize>,
    /// "log" or "linear".
    #[arg(long)]
    tau_spacing: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            horizon: self.horizon,
            resolution: self.resolution,
            surface_order: self.surface_order,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            calibration: self.calibration.clone(),
            tau_min: self.tau_min,
            tau_max: self.tau_max,
            tau_count: self.tau_count,
            tau_spacing: self.tau_spacing.clone(),
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    commands::configure_threads_from_env()?;
    match cli.command {
        Command::Validate(a) => commands::validate(&a.config, &a.overrides()),
        Command::Simulate(a) => commands::simulate(&a.config, &a.overrides()).map(drop),
        Command::Run(a) => commands::run(&a.config, &a.overrides()).map(drop),
        Command::Invert {
            config,
            trace,
            companion,
        } => commands::invert_recorded(
            &config.config,
            &config.overrides(),
            &trace,
            companion.as_deref(),
        )
        .map(drop),
        Command::OracleSuite { level, output } => commands::oracle_suite(level, output.as_deref()),
        Command::EmitPlots { manifest } => {
            let path = commands::emit_plots(&manifest)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_OTHER as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
