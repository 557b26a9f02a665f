//! Command-line driver: experiment orchestration, deterministic seeding,
//! and bit-exact CSV/JSON emission.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

fn main() -> ExitCode {
    match commands::run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
