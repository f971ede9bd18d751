//! Command-line driver: synthetic data generation, classifier training,
//! ablation grids, end-to-end page OCR and scoring against ground truth.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod eval;

use std::ffi::OsString;

pub use config::Config;

/// Bad invocation or configuration. Maps to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Exit code for a failed command: usage errors are 1, a non-finite
/// gradient is 3, anything else (I/O, formats, bad data) is 2.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(glyphocr::Error::NonFiniteGradient { .. }) = cause.downcast_ref::<glyphocr::Error>() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_DATA
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::Parser;
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
