use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fattenlab::config::Command;
use fattenlab::run::{execute, EXIT_INVALID};

#[derive(Parser)]
#[command(name = "fattenlab", version, about = "Allen-Cahn phase-field laboratory")]
struct Cli {
    /// simulate, shoot, study, verify, energy or lsf
    command: String,
    #[arg(long)]
    config: PathBuf,
    /// Exit with status 3 when any report exceeds its tolerance.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(command) = Command::parse(&cli.command) else {
        eprintln!("unknown command '{}'", cli.command);
        return ExitCode::from(EXIT_INVALID as u8);
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("--threads must be positive");
            return ExitCode::from(EXIT_INVALID as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot set thread count: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    ExitCode::from(execute(command, &text, cli.strict) as u8)
}
