//! `raman-modes` command-line front end.
//!
//! Parses the run configuration, dispatches to the simulator and writes
//! CSV/JSON artifacts plus a provenance record into the output directory.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser};

pub use config::{ConfigError, RunConfig, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] raman_core::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// 2 for failures inside the numerics, 1 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "raman-modes",
    version,
    about = "Stimulated Raman scattering mode simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Stokes (write) pass: squeezing mode catalog and mode functions
    Stokes(Common),
    /// Anti-Stokes (read) pass: beamsplitter mode catalog
    Readout(Common),
    /// Write, store and read one Stokes mode
    Chain(Common),
    /// Photon number, equivalent mode number and count distribution
    Stats(Common),
    /// Scan one parameter and tabulate the results
    Sweep(Common),
    /// Find the coupling that gives a target photon number
    Calibrate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: logical cores)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
    /// Output directory, overriding output.directory
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A parsed invocation, ready to run.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub subcommand: Subcommand,
    pub config: RunConfig,
    pub jobs: Option<usize>,
}

/// Outcome of parsing the command line.
pub enum Parsed {
    Run(Box<Invocation>),
    /// `--help` or `--version`; the text goes to stdout.
    Info(String),
}

pub fn parse_args<I, T>(args: I) -> Result<Parsed, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    Ok(Parsed::Info(e.to_string()))
                }
                _ => Err(CliError::Usage(e.to_string())),
            };
        }
    };
    let (subcommand, common) = match cli.command {
        Command::Stokes(c) => (Subcommand::Stokes, c),
        Command::Readout(c) => (Subcommand::Readout, c),
        Command::Chain(c) => (Subcommand::Chain, c),
        Command::Stats(c) => (Subcommand::Stats, c),
        Command::Sweep(c) => (Subcommand::Sweep, c),
        Command::Calibrate(c) => (Subcommand::Calibrate, c),
    };
    let text =
        std::fs::read_to_string(&common.config).map_err(|e| CliError::io(&common.config, e))?;
    let mut config = RunConfig::parse(&text).map_err(|source| CliError::Config {
        path: common.config.clone(),
        source,
    })?;
    config
        .require(subcommand)
        .map_err(|source| CliError::Config {
            path: common.config.clone(),
            source,
        })?;
    if let Some(out) = common.out {
        config.output.directory = out;
    }
    Ok(Parsed::Run(Box::new(Invocation {
        subcommand,
        config,
        jobs: common.jobs.map(|j| j as usize),
    })))
}

/// Runs the invocation on a pool of `jobs` threads and returns the files written.
pub fn execute(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = inv.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {:?} worker threads: {e}", inv.jobs)))?;
    pool.install(|| commands::run(inv.subcommand, &inv.config))
}

/// Full command-line entry point: parse, run, report. Returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match parse_args(args) {
        Ok(Parsed::Run(inv)) => inv,
        Ok(Parsed::Info(text)) => {
            print!("{text}");
            return 0;
        }
        Err(e) => {
            eprintln!("raman-modes: {e}");
            return e.exit_code();
        }
    };
    match execute(&inv) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("raman-modes: {e}");
            e.exit_code()
        }
    }
}
