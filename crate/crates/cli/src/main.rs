use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use quadrep_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            // a closed pipe on stdout is not a failure of the run
            let mut out = std::io::stdout().lock();
            for line in &outcome.summary {
                let _ = writeln!(out, "{line}");
            }
            let _ = writeln!(out, "outputs in {}", outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("quadrep {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
