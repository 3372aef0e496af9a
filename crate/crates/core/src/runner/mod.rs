//! Batch entry points: run a scenario file to completion, validate one
//! without running it, and rebuild a summary from a JSONL log.

mod log;
mod summary;

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use log::{EventLog, EventRecord};
pub use summary::{ContextSummary, HostSummary, RunSummary};

use crate::descriptors::{Diagnostic, PackageRef, ScenarioConfig, ScenarioError};
use crate::kernel::{ClockMode, SimTime};
use crate::sim::{load_package, BuildError, SimOptions, Simulation};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("scenario talks to external endpoints and needs the realtime clock")]
    ModeMismatch,
    #[error("log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: ClockMode,
    /// Simulated seconds to run.
    pub until: SimTime,
    pub seed: u64,
    /// Where to stream the JSONL event log.
    pub log_path: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { mode: ClockMode::Virtual, until: 60.0, seed: 0, log_path: None }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let cfg = ScenarioConfig::parse(&text)?;
    if cfg.declares_external() && !opts.mode.is_realtime() {
        return Err(RunError::ModeMismatch);
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let sim_opts = SimOptions { mode: opts.mode, seed: opts.seed, base_dir, ..SimOptions::default() };
    let mut sim = Simulation::build(&cfg, sim_opts)?;
    if let Some(log_path) = &opts.log_path {
        let file = File::create(log_path).map_err(io_err(log_path))?;
        sim.stream_log_to(Box::new(BufWriter::new(file))).map_err(io_err(log_path))?;
    }
    sim.run(Some(opts.until));
    if let Some(log_path) = &opts.log_path {
        sim.finish_log().map_err(io_err(log_path))?;
    }
    Ok(sim.summary())
}

/// Every problem found in the scenario, including unreadable packages.
/// An empty list means the scenario can be run.
pub fn validate_scenario(path: &Path) -> Vec<Diagnostic> {
    let whole = |error: ScenarioError| Diagnostic { location: "/".into(), message: error.to_string(), error };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return vec![whole(ScenarioError::Json(format!("{}: {e}", path.display())))],
    };
    let cfg = match ScenarioConfig::parse_unchecked(&text) {
        Ok(c) => c,
        Err(e) => return vec![whole(e)],
    };
    let mut out = cfg.diagnostics();
    let base_dir = path.parent().unwrap_or(Path::new(""));
    for (i, p) in cfg.orchestrator.onboarded_packages.iter().enumerate() {
        if let PackageRef::Path(src) = p {
            if let Err(message) = load_package(base_dir, src) {
                let location = format!("/orchestrator/onboardedPackages/{i}");
                let error = ScenarioError::Invalid { location: location.clone(), message: message.clone() };
                out.push(Diagnostic { location, message, error });
            }
        }
    }
    out
}

/// Rebuild the run summary from a JSONL log file.
pub fn summarize(path: &Path) -> Result<RunSummary, RunError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EventRecord =
            serde_json::from_str(&line).map_err(|e| RunError::CorruptLog { line: i + 1, reason: e.to_string() })?;
        records.push(r);
    }
    RunSummary::from_records(&records).map_err(|reason| RunError::CorruptLog { line: 0, reason })
}
