//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Error;
use crate::pipeline::{self, CommandOutput, Prepared};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stator", version, about = "Modal simulation and holographic analysis of traveling-wave stators")]
pub struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set drive.peak_to_peak_voltage=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Output directory; wins over STATOR_OUT_DIR and the configuration.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenfrequency table and radial mode-shape dumps.
    Modes,
    /// Probe time series and settling report.
    Respond,
    /// Time-averaged and stroboscopic fringe images.
    Fringes,
    /// Circle extraction, sinusoid fits and strobe-phase tracking.
    Fit,
    /// Comparison against the embedded reference frequencies.
    Report,
    /// Print the effective configuration as JSON.
    Config,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Geometry(_)
        | Error::Material(_)
        | Error::Discretization(_)
        | Error::TimeStep { .. } => EXIT_CONFIG,
        Error::Eigen { .. }
        | Error::Domain(_)
        | Error::Sampling(_)
        | Error::Unwrap { .. }
        | Error::NoMode(_) => EXIT_NUMERICAL,
        Error::Io { .. } => EXIT_IO,
    }
}

fn execute(cli: &Cli) -> Result<String, Error> {
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Command::Config = cli.command {
        return Ok(config.to_json() + "\n");
    }
    let out = cli.out.clone().unwrap_or_else(|| config.resolved_output_dir());
    let prepared: Prepared = pipeline::prepare(&config)?;
    let output: CommandOutput = match cli.command {
        Command::Modes => pipeline::cmd_modes(&prepared, &out)?,
        Command::Respond => pipeline::cmd_respond(&prepared, &out)?,
        Command::Fringes => pipeline::cmd_fringes(&prepared, &out)?,
        Command::Fit => pipeline::cmd_fit(&prepared, &out)?,
        Command::Report => pipeline::cmd_report(&prepared, &out)?,
        Command::Config => unreachable!(),
    };
    let mut text = output.summary;
    for f in &output.files {
        text.push_str(&format!("wrote {}\n", f.display()));
    }
    Ok(text)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
