use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gdecoh::cli::{self, Command};

/// Gravitational decoherence of one-photon states.
#[derive(Debug, Parser)]
#[command(name = "gdecoh", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match cli::run(args.command, &args.config, &args.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gdecoh {}: {e}", args.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
