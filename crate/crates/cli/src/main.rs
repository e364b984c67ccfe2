use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match hud_cli::run(hud_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
