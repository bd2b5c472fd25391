//! Command-line pipeline for noise-robust keyword spotting experiments:
//! data preparation, Data2Vec-style pretraining, supervised training,
//! suite evaluation, reporting, and numeric self-checks.

pub mod args;
pub mod commands;
pub mod config;
pub mod errors;
pub mod oracle;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

/// Full CLI entry point; returns the process exit code.
pub fn run_from_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
