use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use hlevent_cli::{run, Command, Config};

/// High-level event mining over process event logs.
#[derive(Parser)]
#[command(name = "hlevent", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides one config key, e.g. `--set thresholds.percentile=95`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory; overrides `output`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(out) = cli.output {
        cfg.output = out;
    }
    let report = run(cli.command, &cfg)?;
    for (k, v) in &report.counts {
        println!("{k}: {v}");
    }
    for p in &report.outputs {
        println!("wrote {}", p.display());
    }
    Ok(())
}
