mod args;
mod commands;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command, UsageError};
use commands::Session;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Session {
        config: cli.config.clone(),
        verbose: cli.verbose,
        quiet: cli.quiet,
        default_jobs: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let started = Instant::now();
    let name = cli.command.name();
    let outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(&ctx, a),
        Command::Estimate(a) => commands::estimate_cmd(&ctx, a),
        Command::Gcv(a) => commands::gcv_cmd(&ctx, a),
        Command::Bands(a) => commands::bands_cmd(&ctx, a),
        Command::Montecarlo(a) => commands::montecarlo_cmd(&ctx, a),
        Command::Empirical(a) => commands::empirical_cmd(&ctx, a),
        Command::Rates(a) => commands::rates_cmd(&ctx, a),
    }
    .and_then(|out| output::write_timing(&out, name, started.elapsed()));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
