//! Command-line front end: argument and config handling, sweep execution,
//! CSV and SVG output.

pub mod args;
pub mod plot;
pub mod run;

use std::ffi::OsString;
use std::process::ExitCode;

pub use plot::{emit_plot, Quantity};

/// Exit code for an unusable configuration.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code when verify-landscape finds a failing property.
pub const EXIT_PROPERTY: u8 = 3;

/// Runs the CLI on `argv`, writing results to stdout and diagnostics to stderr.
pub fn main_with(argv: Vec<OsString>) -> ExitCode {
    let cli = match args::parse(argv) {
        Ok(Ok(cli)) => cli,
        Ok(Err(e)) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (kind, options) = cli.command.parts();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run::execute(kind, options, &mut out) {
        Ok(run::Outcome::Completed) => ExitCode::SUCCESS,
        Ok(run::Outcome::PropertyFailed) => ExitCode::from(EXIT_PROPERTY),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<run::ConfigError>() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
