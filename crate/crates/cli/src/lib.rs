//! Command-line pipelines: simulate, correlate, fit and report.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 2 for invalid input, 3 when a computation fails.

mod commands;
mod config;
mod io;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunRecord;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const THREADS_ENV: &str = "PHOTONSTAT_THREADS";

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<photonstat::Error> for CliError {
    fn from(e: photonstat::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "photonstat", version, about = "Single-photon emitter simulation and photon-statistics analysis")]
pub struct Cli {
    /// JSON file with option values; flags given on the command line win.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an emitter in an HBT setup and write time tags.
    Simulate(commands::SimulateArgs),
    /// Coincidence histogram of two channels.
    Correlate(commands::CorrelateArgs),
    /// Histogram, fit and antibunching verdict.
    G2(commands::G2Args),
    /// TCSPC histogram against the sync channel and tail fit.
    Lifetime(commands::LifetimeArgs),
    /// Zero-phonon-line fit, ZPL/PSB areas and Huang-Rhys factor.
    FitSpectrum(commands::FitSpectrumArgs),
    /// Thermal quenching fit of intensity against temperature.
    FitQuench(commands::FitQuenchArgs),
    /// Thermal-cycle report from a series manifest.
    Report(commands::ReportArgs),
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Worker count from `PHOTONSTAT_THREADS`, or all cores.
pub fn thread_count() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => validation(format!("{THREADS_ENV}={v} is not a positive integer")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let threads = thread_count()?;
    // fails harmlessly if a pool already exists in this process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, cfg),
        Command::Correlate(a) => commands::correlate(a, cfg, threads),
        Command::G2(a) => commands::g2(a, cfg, threads),
        Command::Lifetime(a) => commands::lifetime(a, cfg),
        Command::FitSpectrum(a) => commands::fit_spectrum(a, cfg),
        Command::FitQuench(a) => commands::fit_quench(a, cfg),
        Command::Report(a) => report::report(a, cfg),
    }
}

/// Runs one command line and returns its exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
