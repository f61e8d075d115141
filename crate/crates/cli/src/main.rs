use std::process::ExitCode;

use clap::Parser;
use lps_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match lps_cli::commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
