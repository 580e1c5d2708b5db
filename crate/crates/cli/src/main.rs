//! `zicp`: reproducible entry point for every table and figure analogue.

mod args;
mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, RunFlags};
use failure::Failure;

fn run_flags(command: &Command) -> &RunFlags {
    match command {
        Command::Datagen(a) => &a.run,
        Command::Ledd(a) => &a.run,
        Command::Train(a) => &a.run,
        Command::Conformal(a) => &a.run,
        Command::Sweep(a)
        | Command::Evaluate(a)
        | Command::Report(a)
        | Command::Significance(a) => &a.run,
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let flags = run_flags(&cli.command);
    if let Some(jobs) = flags.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot size thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Datagen(a) => commands::datagen(a),
        Command::Ledd(a) => commands::ledd(a),
        Command::Train(a) => commands::train(a),
        Command::Conformal(a) => commands::conformal(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
        Command::Significance(a) => commands::significance(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = if run_flags(&cli.command).verbose {
        "info"
    } else {
        "warn"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("zicp: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
