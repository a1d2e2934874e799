use std::process::ExitCode;

use clap::Parser;
use eprsim_cli::{main_with, Cli, EXIT_ERROR};

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => main_with(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
