use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match mrf::run(mrf::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
