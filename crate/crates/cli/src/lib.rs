//! Spec-file front end for the kodaira engine: a small language describing a
//! twistor space, the commands that run the pipeline on it, and JSON reports.

pub mod commands;
pub mod dsl;
pub mod error;
pub mod report;

pub use commands::{run, Kind, Task};
pub use dsl::{parse_spec, SpecDocument};
pub use error::CliError;
pub use report::{Report, Status};

use std::path::Path;

use clap::Parser;

#[derive(Parser)]
#[command(no_binary_name = true)]
struct TaskLine {
    #[command(subcommand)]
    task: Task,
}

/// Parses one `run` line of a spec file.
pub fn parse_task(line: &str) -> Result<Task, CliError> {
    TaskLine::try_parse_from(line.split_whitespace()).map(|t| t.task).map_err(|e| CliError::Usage(e.render().to_string()))
}

/// Runs every `run` line of a spec, resolving file arguments against
/// `base_dir`.
pub fn run_all(doc: &SpecDocument, base_dir: &Path) -> Report {
    let reports = doc
        .commands
        .iter()
        .map(|line| match parse_task(line) {
            Ok(task) => run(&task, Some(doc), base_dir),
            Err(e) => Report::new(line, Status::Error, commands::error_tree(&e)),
        })
        .collect();
    Report::batch(reports)
}
