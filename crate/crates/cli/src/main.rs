use std::process::ExitCode;

use clap::Parser;

use randskew_cli::{execute, Cli, SEED_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli, std::env::var(SEED_ENV).ok()) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("{note}");
            }
            if report.out.is_none() {
                print!("{}", report.table);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
