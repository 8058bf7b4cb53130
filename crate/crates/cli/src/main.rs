//! `fwl`: spectral tables, BBM simulation, spine and CPP sampling, and the
//! verification suite.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "fwl", version, about = "Critical branching Brownian motion with reflection at 0 and killing at L")]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
