use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kodaira_cli::{parse_spec, run, run_all, CliError, Report, SpecDocument, Task};

#[derive(Parser)]
#[command(name = "kodaira", version, about = "Moduli of rational curves in twistor spaces, computed exactly")]
struct Cli {
    /// Spec file describing the twistor space.
    #[arg(short, long, global = true)]
    spec: Option<PathBuf>,
    /// Print the JSON report instead of the text rendering.
    #[arg(long, global = true)]
    json: bool,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand)]
enum Top {
    #[command(flatten)]
    Task(Task),
    /// Run the commands listed in the spec file.
    Run,
    /// Print the spec file in canonical form.
    Fmt,
}

fn load(path: &Path) -> Result<SpecDocument, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_spec(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let doc = match cli.spec.as_deref().map(load).transpose() {
        Ok(d) => d,
        Err(e) => {
            let at = cli.spec.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default();
            eprintln!("error: {at}{e}");
            return ExitCode::from(1);
        }
    };
    let report = match &cli.command {
        Top::Task(task) => run(task, doc.as_ref(), Path::new(".")),
        Top::Run | Top::Fmt => {
            let Some(doc) = doc.as_ref() else {
                eprintln!("error: this command needs --spec");
                return ExitCode::from(1);
            };
            if matches!(cli.command, Top::Fmt) {
                print!("{doc}");
                return ExitCode::SUCCESS;
            }
            let dir = cli.spec.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
            run_all(doc, dir)
        }
    };
    emit(&report, cli.json, cli.out.as_deref())
}

fn emit(report: &Report, json: bool, out: Option<&Path>) -> ExitCode {
    let text = report.to_json();
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, &text) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    if json {
        print!("{text}");
    } else {
        print!("{}", report.render());
    }
    ExitCode::from(report.status.exit_code())
}
