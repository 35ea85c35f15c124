//! Experiment commands behind the `rpca` binary.

pub mod args;
pub mod commands;
pub mod manifest;

use anyhow::Result;

pub use args::{Cli, Command};
pub use commands::Outcome;

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Faces(a) => commands::faces(a),
    }
}
