//! Command-line front end: config parsing, dispatch and file output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;

pub use commands::{run_command, Command, Output};
pub use config::{parse_config, parse_with_overrides, RunConfig};
pub use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "nwcell", version, about = "Bistable buckled-nanowire memory cell simulator")]
pub struct Cli {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for `<command>.csv` and `<command>.json`.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Override a config key, e.g. `--set beam.length_m=3e-5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

/// Header text shared by the CSV comment block.
fn header(cmd: &Command, cfg: &RunConfig) -> String {
    format!(
        "{}\ncommand: {}\nflags: {}\nconfig:\n{}",
        output::ARTIFACT,
        cmd.name(),
        serde_json::to_string(cmd).expect("flags serialize"),
        config::to_toml(cfg)
    )
}

/// Run `cmd` and write its CSV and JSON into `out`. A protocol run that
/// touches an electrode still writes its files, then reports `Contact`.
pub fn execute(cmd: &Command, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let result = run_command(cmd, cfg)?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let name = cmd.name();
    output::write_file(&out.join(format!("{name}.csv")), &result.table.to_csv(&header(cmd, cfg)))?;
    let summary = json!({
        "artifact": output::ARTIFACT,
        "command": name,
        "flags": cmd,
        "config": cfg,
        "result": result.summary,
    });
    output::write_file(&out.join(format!("{name}.json")), &output::to_json_string(&summary))?;
    match result.contact {
        Some((cell, step)) => Err(CliError::Contact { cell, step }),
        None => Ok(()),
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    parse_with_overrides(&text, &cli.set)
}

fn report(err: &CliError) -> i32 {
    eprintln!("{}", serde_json::to_string(&err.to_json()).expect("error serializes"));
    err.exit_code()
}

/// Entry point shared by the binary and tests.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    match execute(&cli.command, &cfg, &cli.out) {
        Ok(()) => exit::OK,
        Err(e) => report(&e),
    }
}
