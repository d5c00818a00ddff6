//! Command-line front end and HTTP inference service for the courtesy
//! toolkit.

pub mod args;
pub mod commands;
pub mod service;

use clap::Parser;

use crate::args::Cli;
use crate::commands::{Run, UsageError};

/// Parses `argv`, runs the subcommand and returns the process exit status:
/// 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result =
        Run::resolve(cli.config.as_deref(), cli.seed).and_then(|mut run| commands::dispatch(&mut run, cli.command));
    match result {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
