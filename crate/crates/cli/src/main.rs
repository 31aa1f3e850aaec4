//! `nightsynth` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 I/O failure.

mod cli;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::{Cli, Command, DatasetCommand, NiqeCommand};
use commands::Ctx;

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;

fn run(cli: Cli) -> nightsynth_core::Result<()> {
    let ctx = Ctx { verbose: cli.verbose };
    match &cli.command {
        Command::Decompose(a) => commands::decompose(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Flare(a) => commands::flare(&ctx, a),
        Command::Curate(a) => commands::curate(&ctx, a),
        Command::Dataset(DatasetCommand::Build(a)) => commands::dataset_build(&ctx, a),
        Command::Eval(cmd) => commands::eval(cmd),
        Command::Niqe(NiqeCommand::Fit(a)) => commands::niqe_fit_cmd(&ctx, a),
        Command::Routing(cmd) => commands::routing_cmd(cmd),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_INVALID),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nightsynth: error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_INVALID })
        }
    }
}
