use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = ttnn_cli::Cli::parse();
    match ttnn_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
