//! `rmab`: generate synthetic cohorts, train transition predictors, plan
//! weekly intervention lists and simulate randomized trials.
//!
//! Every command reads a TOML config (`--config`, with `--set key=value`
//! overrides) and writes its outputs plus a `manifest.toml` into `--out`.
//! `rmab replay` re-runs a manifest and checks the outputs are identical.

mod cli;
mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command, RunArgs};
use commands::Kind;
use error::CliResult;

fn run_with(kind: Kind, args: &RunArgs) -> CliResult<manifest::Manifest> {
    let table = config::load(args.config.as_deref(), &args.overrides)?;
    commands::execute(kind, table, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => run_with(Kind::Generate, args),
        Command::Train { mode, run } => run_with(Kind::Train(*mode), run),
        Command::Plan(args) => run_with(Kind::Plan, args),
        Command::Trial(args) => run_with(Kind::Trial, args),
        Command::Report(args) => run_with(Kind::Report, args),
        Command::Replay { manifest, out } => commands::replay::run(manifest, out),
    };
    match result {
        Ok(m) => {
            eprintln!("rmab {}: wrote {} outputs", m.command, m.outputs.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rmab: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
