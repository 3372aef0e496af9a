use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use mecsim_core::kernel::ClockMode;
use mecsim_core::runner::{run_scenario, summarize, validate_scenario, RunOptions};

/// Discrete-event simulator for multi-access edge computing scenarios.
#[derive(Parser)]
#[command(name = "mecsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print its summary as JSON.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Virtual)]
        mode: Mode,
        /// Simulated seconds to run.
        #[arg(long, default_value_t = 60.0)]
        until: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSONL event log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Check a scenario and its packages without running it.
    Validate { scenario: PathBuf },
    /// Rebuild the run summary from a JSONL event log.
    Summarize { log: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Virtual,
    Realtime,
}

fn main() -> ExitCode {
    env_logger::init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { scenario, mode, until, seed, log } => {
            anyhow::ensure!(until.is_finite() && until >= 0.0, "--until must be a non-negative number");
            let mode = match mode {
                Mode::Virtual => ClockMode::Virtual,
                Mode::Realtime => ClockMode::realtime(),
            };
            let opts = RunOptions { mode, until, seed, log_path: log };
            let summary = run_scenario(&scenario, &opts).with_context(|| format!("running {}", scenario.display()))?;
            print_json(&summary)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            let diagnostics = validate_scenario(&scenario);
            let mut out = io::stdout().lock();
            for d in &diagnostics {
                writeln!(out, "{}: {}", d.location, d.message)?;
            }
            if diagnostics.is_empty() {
                writeln!(out, "ok")?;
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Summarize { log } => {
            let summary = summarize(&log).with_context(|| format!("summarizing {}", log.display()))?;
            print_json(&summary)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
