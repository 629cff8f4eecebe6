//! Command-line front end: dataset synthesis, indexing, querying, sweeps,
//! training and match visualization.

// Bounds are checked as `!(x > bound)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod artifact;
pub mod commands;
pub mod data;
pub mod error;
pub mod visualize;

use args::{Cli, Command};
use error::CliResult;

/// Run one command and return what it prints on stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Index(a) => commands::index(a),
        Command::Query(a) => commands::query(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Visualize(a) => commands::visualize(a),
    }
}
