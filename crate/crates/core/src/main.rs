use std::process::ExitCode;

use clap::Parser;
use visitsolve::cli::{run, Cli};

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("VISITSOLVE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("VISITSOLVE_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("VISITSOLVE_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(summary) => {
            eprintln!(
                "{}: wrote {} files to {}",
                summary.manifest.command,
                summary.manifest.files.len() + 1,
                cli_out(&cli).display()
            );
            match summary.failure {
                Some(msg) => {
                    eprintln!("error: {msg}");
                    ExitCode::FAILURE
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cli_out(cli: &Cli) -> &std::path::Path {
    cli.command.out()
}
