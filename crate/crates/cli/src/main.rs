mod args;
mod commands;
mod config;
mod spec;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;

/// Command failure; input problems exit with 2, numerical ones with 1.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl From<surfspline::Error> for Failure {
    fn from(e: surfspline::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads.or(cfg.threads) {
        if t == 0 {
            return Err(Failure::Input("--threads must be positive".into()));
        }
        // Fails only if the pool was already built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::MeshGen(a) => commands::mesh_gen(a, &cfg),
        Command::Design(a) => commands::design(a, &cfg),
        Command::Predict(a) => commands::predict(a, &cfg),
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Compare(a) => commands::compare(a, &cfg),
        Command::Bench(a) => commands::bench(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(1)
        }
    }
}
