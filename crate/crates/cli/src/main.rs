//! `ruinkit` command-line driver.
//!
//! Exit codes: 0 on success, 1 for invalid input or a violated invariant,
//! 2 for numerical failures (solver breakdown, non-convergence).

mod args;
mod commands;
mod error;
mod output;
mod source;
mod verify;

use clap::Parser;

use args::{Cli, Command};
use error::CliResult;
use output::write;

fn run(cli: Cli) -> CliResult<()> {
    let common = &cli.common;
    let (report, violation) = match &cli.command {
        Command::Model { kind, size, dim, margin } => (commands::model(kind, *size, *dim, *margin)?, None),
        Command::Exit { source, start, t, extended, route } => {
            (commands::exit(source, start, *t, *extended, *route)?, None)
        }
        Command::Eigen { source, top, full } => (commands::eigen(source, *top, *full)?, None),
        Command::Doob { source } => (commands::doob(source)?, None),
        Command::Verify { suite, source, radii } => verify::verify(source, *suite, radii.as_deref(), common.seed)?,
        Command::Simulate { source, start, samples, record, max_steps } => {
            (commands::simulate(source, start, *samples, common.seed, *record, *max_steps)?, None)
        }
        Command::Report { source } => (commands::report(source)?, None),
    };
    write(&report.render(common.format)?, common.output.as_deref())?;
    violation.map_or(Ok(()), Err)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("ruinkit: {e}");
        std::process::exit(e.exit_code());
    }
}

