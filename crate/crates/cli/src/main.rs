//! Command-line entry point for the quantize/convert/simulate/verify
//! pipeline.
//!
//! Exit codes: 0 success (and lossless for `verify`), 1 usage or invalid
//! input, 2 I/O or container problems, 3 convertibility failure, 4
//! simulation reached its horizon without quiescence, 5 equivalence
//! mismatch. Errors print one machine-parseable line
//! `error: <kind>: <detail>` on stderr.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::Parser;
use spikemorph_core::Error;

use commands::{Cli, CommandError};

fn exit_code(err: &CommandError) -> i32 {
    match err {
        CommandError::Usage(_) => 1,
        CommandError::NonQuiescent(_) => 4,
        CommandError::Mismatch(_) => 5,
        CommandError::Core(e) => match e {
            Error::Io(_) | Error::Parse { .. } | Error::Container(_) => 2,
            Error::Convertibility(_) => 3,
            _ => 1,
        },
    }
}

fn kind_of(err: &CommandError) -> &str {
    match err {
        CommandError::Usage(_) => "usage",
        CommandError::NonQuiescent(_) => "non-quiescent",
        CommandError::Mismatch(_) => "mismatch",
        CommandError::Core(e) => e.kind(),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("error: usage: {}", e.kind());
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {}: {}", kind_of(&err), err);
            std::process::exit(exit_code(&err));
        }
    }
}
