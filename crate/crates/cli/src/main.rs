use std::process::ExitCode;

use clap::Parser;
use flashbias_cli::args::Cli;

fn main() -> ExitCode {
    // clap itself exits with 2 on usage errors
    let cli = Cli::parse();
    match flashbias_cli::run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("flashbias: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
