mod args;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use commands::Ctx;
use config::FileConfig;
use error::CliError;

fn seed(cli: Option<u64>, file: &FileConfig) -> Result<u64, CliError> {
    if let Some(s) = cli.or(file.seed()?) {
        return Ok(s);
    }
    match std::env::var("OUDIFF_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Invalid(format!("OUDIFF_SEED is not an integer: {v}"))),
        Err(_) => Ok(0),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::empty(),
    };
    let ctx = Ctx { seed: seed(cli.seed, &file)?, dry_run: cli.dry_run, output: cli.output.clone(), file };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Invalid("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| commands::run(&cli.command, &ctx))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oudiff {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
