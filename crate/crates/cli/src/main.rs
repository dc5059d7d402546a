//! `intermit`: runs the numerical experiments of the toolkit and writes CSV
//! data plus JSON summaries.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
//! failure. Failures print a one-line JSON object on stderr.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use config::{Command, Flags, RunConfig};
use output::CliError;

#[derive(Debug, Parser)]
#[command(name = "intermit", version, about = "Ulam and tower approximations for intermittent maps")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.command, cli.flags)?;
    let failures = commands::run(cli.command, &cfg)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::numerical(failures.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::config(first.trim_start_matches("error: ")).to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
