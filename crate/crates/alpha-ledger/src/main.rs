use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = alpha_ledger::cli::Cli::parse();
    match alpha_ledger::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
