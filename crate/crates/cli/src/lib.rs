//! Command-line driver for the uqpde test problems.

pub mod args;
pub mod config;
pub mod error;
pub mod run;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use serde_json::Map;

use crate::args::{flag_overrides, Cli, Command};
use crate::config::{read_config_file, validate_config, OUTPUT_DIR_ENV};
use crate::error::CliResult;

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: &Command) -> CliResult<()> {
    if let Command::Plot(a) = command {
        run::replot(&a.dir)?;
        eprintln!("plots written to {}", a.dir.join("plots").display());
        return Ok(());
    }
    let (problem, flags, common) = flag_overrides(command).expect("problem subcommand");
    let file = match &common.config {
        Some(path) => read_config_file(path)?,
        None => Map::new(),
    };
    let env_root = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let config = validate_config(problem, &file, &flags, env_root.as_deref())?;
    let summary = run::run(&config, common.quiet)?;
    let acc: Vec<String> = summary.acceptance.iter().map(|a| format!("{a:.3}")).collect();
    eprintln!(
        "{problem}: {} finished in {:.1} s, acceptance {}; output in {}",
        summary.sampler,
        summary.runtime_seconds,
        acc.join(", "),
        summary.output_dir.display()
    );
    Ok(())
}
