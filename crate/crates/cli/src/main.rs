use std::process::ExitCode;

use clap::Parser;
use kerr_cmm_cli::{exit_code, run, Cli, EXIT_MISMATCH, EXIT_OK};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            println!("{}", outcome.summary);
            ExitCode::from(if outcome.mismatch { EXIT_MISMATCH } else { EXIT_OK })
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
