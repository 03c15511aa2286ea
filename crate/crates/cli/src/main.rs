mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Command, RunConfig};
use error::{CliError, CliResult, EXIT_VALIDATION};

fn run(cfg: &RunConfig) -> CliResult<()> {
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match &cfg.command {
        Command::Synth(a) => commands::synth(a, cfg.seed, cfg.force),
        Command::Train(a) => commands::train(a, cfg.force),
        Command::Forecast(a) => commands::forecast(a, cfg.force),
        Command::Evaluate(a) => commands::evaluate(a, cfg.force),
        Command::Explain(a) => commands::explain(a, cfg.force),
    }
}

fn main() -> ExitCode {
    let cfg = match RunConfig::try_parse() {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
