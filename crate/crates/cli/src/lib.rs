//! Experiment runner behind the `unbiased` binary.
//!
//! Each experiment reads a parameter table, writes CSV/PGM artifacts and a
//! `manifest.json` into the output directory, and returns summary lines for
//! the terminal. Identical configuration and seed give byte-identical
//! artifacts; only the manifest (which records wall time) differs.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;
use std::time::Instant;

pub use config::{Experiment, ExperimentConfig, Params};
pub use output::Outputs;

/// Failure of a CLI invocation.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration.
    Usage(String),
    Core(unbiased_core::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<unbiased_core::Error> for CliError {
    fn from(e: unbiased_core::Error) -> Self {
        match e {
            unbiased_core::Error::Io(io) => CliError::Io(io),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    /// 1 for numerical and runtime failures, 2 for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            CliError::Io(_) => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            _ if self.exit_code() == 1 => "numerical",
            _ => "usage",
        }
    }

    /// Single-line JSON error record.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Build metadata printed by `version`.
pub fn version_text() -> String {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    format!(
        "unbiased {VERSION}\ncore {}\ntarget {}-{}\nprofile {profile}\n",
        unbiased_core::VERSION,
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub files: Vec<String>,
    pub lines: Vec<String>,
}

/// Runs one experiment into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let mut out = Outputs::create(out_dir)?;
    let seed = config.seed;
    let lines = match &config.params {
        Params::Disk(c) => experiments::disk::run(c, seed, &mut out)?,
        Params::ProbMap(c) => experiments::prob_map::run(c, &mut out)?,
        Params::SnrCurves(c) => experiments::snr::run(c, &mut out)?,
        Params::Bounds(c) => experiments::bounds::run(c, &mut out)?,
        Params::Phantom(c) => experiments::phantom::run(c, seed, &mut out)?,
        Params::Ncf(c) => experiments::ncf::run(c, &mut out)?,
    };
    let files = out.files().to_vec();
    out.write_manifest(config, start.elapsed().as_secs_f64())?;
    Ok(RunSummary { experiment: config.experiment(), files, lines })
}
