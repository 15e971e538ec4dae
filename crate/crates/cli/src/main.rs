//! `sigcert`: certify robustness of sigmoid-family networks from the shell.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use sigcert_core::Error;

use crate::commands::Cli;

/// Exit status per error family; clap's own usage errors exit with 2.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        Error::Parse(_)
        | Error::ShapeMismatch { .. }
        | Error::UnknownActivation(_)
        | Error::Architecture(_) => 4,
        Error::Dataset(_) => 5,
        Error::InvalidConfig(_)
        | Error::InvalidLabel { .. }
        | Error::Dimension { .. }
        | Error::OracleDimension(_)
        | Error::OutOfRange { .. } => 6,
        Error::NonFinite(_)
        | Error::NoSignChange { .. }
        | Error::NonConvergence { .. }
        | Error::InternalInvariant(_) => 7,
        Error::Report(_) => 8,
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
