//! `moe-lab`: data generation, theory verification, distillation, sweeps
//! and plots.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a verification
//! exceeded its tolerance, 3 I/O or file-format error.

mod cli;
mod commands;
mod config;
mod error;
mod manifest;
mod plot;
mod teacher;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::config::Resolver;
use crate::error::CliResult;

/// Settings every subcommand sees.
pub struct Context {
    pub resolver: Resolver,
    pub force: bool,
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Context {
        resolver: Resolver::load(cli.config.as_deref())?,
        force: cli.force,
    };
    match cli.command {
        Command::GenData(a) => commands::data::gen_data(a, ctx),
        Command::GenDict(a) => commands::data::gen_dict(a, ctx),
        Command::GaussianControl(a) => commands::data::gaussian_control(a, ctx),
        Command::Train(a) => commands::train::train(a, ctx),
        Command::Sweep(a) => commands::train::sweep(a, ctx),
        Command::VerifyTheory(a) => commands::verify::verify_theory(a, ctx),
        Command::Fvu(a) => commands::data::fvu(a),
        Command::Plot(a) => plot::plot_command(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                error::Kind::Usage.exit_code()
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    }
}
