//! Command-line front end of the `crowdpoint` toolkit.
//!
//! Subcommands: `gen` (seeded fixtures), `eval` (nAP, counting errors and
//! point-level F1), `match-demo` and `train-demo` (per-scene training under a
//! chosen target-assignment strategy). Exit codes: 0 success, 1 internal
//! error, 2 bad input.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod io;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::args::{Cli, Command};
pub use crate::error::CliError;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run(argv: Vec<OsString>, out: &mut dyn Write) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(config::expand(argv)?)?;
    match &cli.command {
        Command::Gen(a) => commands::gen(a, out),
        Command::Eval(a) => commands::eval(a, out),
        Command::MatchDemo(a) => commands::match_demo(a, out),
        Command::TrainDemo(a) => commands::train_demo(a, out),
    }
}
