use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beltrami::config::{has_errors, RunConfig, Severity};
use beltrami::runner::{run, ExitStatus};

/// Beltrami solutions, first variations and extremal searches on a grid.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// Write artifacts here instead of the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel cell loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline selected by the configuration's mode.
    Run { config: PathBuf },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return exit(ExitStatus::Config);
        }
    }
    let path = match &cli.command {
        Command::Run { config } | Command::Validate { config } => config,
    };
    let config = match RunConfig::load(path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(ExitStatus::Config);
        }
    };
    match cli.command {
        Command::Validate { .. } => {
            let diagnostics = config.validate();
            let mut stdout = std::io::stdout().lock();
            for d in &diagnostics {
                let _ = writeln!(stdout, "{d}");
            }
            if has_errors(&diagnostics) {
                exit(ExitStatus::Config)
            } else {
                let _ = writeln!(stdout, "ok: configuration is runnable");
                exit(ExitStatus::Ok)
            }
        }
        Command::Run { .. } => {
            for d in config.validate().iter().filter(|d| d.severity == Severity::Warning) {
                eprintln!("{d}");
            }
            match run(&config, cli.out.as_deref()) {
                Ok(outcome) => {
                    // Output may be piped into a reader that exits early.
                    let mut stdout = std::io::stdout().lock();
                    let _ = writeln!(stdout, "{}", outcome.summary);
                    for file in &outcome.files {
                        let _ = writeln!(stdout, "wrote {}", file.display());
                    }
                    exit(ExitStatus::Ok)
                }
                Err(failure) => {
                    eprintln!("error: {failure}");
                    exit(failure.status)
                }
            }
        }
    }
}
