mod commands;
mod config;
mod error;

use clap::Parser;

use crate::config::{Cli, Command, RunConfig};
use crate::error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::resolve(&cli.global)?;
    match cli.command {
        Command::Ingest(args) => commands::ingest(config, args),
        Command::Split(args) => commands::split(config, args),
        Command::Train(args) => commands::train(config, args),
        Command::Infer(args) => commands::infer(config, args),
        Command::Eval(args) => commands::eval(config, args),
        Command::Report(args) => commands::report(config, args),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
