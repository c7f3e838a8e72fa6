use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use parabolic_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match parabolic_cli::run(&cli) {
        Ok(outcome) => {
            let _ = std::io::stdout().write_all(outcome.json.as_bytes());
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("parabolic: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
