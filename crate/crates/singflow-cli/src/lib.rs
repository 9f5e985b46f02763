//! Command-line front end: field parsing, run configuration, and the
//! pipeline orchestration around `singflow-core`. Everything here is
//! plumbing; the numerics live in the core crate.
//!
//! Exit codes: 0 success, 2 configuration error, 3 budget error,
//! 4 numerical failure.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::Parser;
use singflow_core::Error;

pub mod commands;
pub mod config;
pub mod report;

#[derive(Parser)]
#[command(
    name = "singflow",
    version,
    about = "Flows, Poincaré cocycles, chain-recurrence boxes, and hyperbolicity certificates for smooth 3D vector fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: commands::Command,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Config(String),
    Io(PathBuf, std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Config(msg) => f.write_str(msg),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(..) => 2,
            CliError::Core(e) => match e {
                Error::InvalidField(_)
                | Error::ParseField(_)
                | Error::InvalidArgument(_)
                | Error::WrongChecker { .. } => 2,
                Error::BudgetExceeded(_) => 3,
                _ => 4,
            },
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
