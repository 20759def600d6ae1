//! Command-line front end for the matrix-function solvers.
//!
//! `parafun run <experiment> [--key value ...]` resolves one of the named
//! experiment setups (or a custom run on a Matrix Market file), executes it
//! on the requested number of workers, and writes `errors.csv`,
//! `config.resolved.txt`, `plot.gp` and `result.mtx` into the output
//! directory. Exit codes: 0 on success, 2 for configuration errors
//! (unknown experiment, out-of-domain flag, unreadable input), 3 for
//! numerical failures (singular solves, diverged flows).

use std::ffi::OsString;

use clap::Parser;

pub mod args;
pub mod error;
pub mod experiments;
pub mod mtx;

pub use error::{CliError, CliResult};

/// Parses `args` (including the program name), runs the requested
/// experiment, and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders its own help/version output; usage errors go to
            // stderr and exit 2, help requests to stdout and exit 0.
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let args::Command::Run(run) = cli.command;
    match experiments::run_to_disk(&run) {
        Ok(dir) => {
            println!(
                "wrote errors.csv, config.resolved.txt, plot.gp and result.mtx under {}",
                dir.display()
            );
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
