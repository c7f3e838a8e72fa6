//! Command-line front end: map-file ingestion, experiment commands, JSON and
//! CSV reports and PPM rendering.

pub mod args;
pub mod commands;
pub mod error;
pub mod render;
pub mod report;

use args::{Cli, Command};
use commands::Outcome;
use error::CliError;

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Check(a) => commands::check(a),
        Command::Param(a) => commands::param(a),
        Command::Verify(a) => commands::verify(a),
        Command::Disks(a) => commands::disks(a),
        Command::Render(a) => commands::render(a),
    }
}
