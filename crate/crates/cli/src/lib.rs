//! Batch runner for the experiments of `ventzell-core`.
//!
//! One TOML document describes one experiment. [`execute`] validates it,
//! runs the ensemble on the current rayon pool and writes a JSON verdict,
//! CSV tables and a `manifest.json` into the output directory.

pub mod config;
pub mod manifest;
pub mod runner;

use std::path::Path;

use thiserror::Error;

pub use config::{ExperimentConfig, ExperimentKind, Resolved};
pub use manifest::{Manifest, ManifestEntry};
pub use runner::{run_experiment, Artifact, RunOutcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("experiment {experiment} failed: {source}")]
    Runtime {
        experiment: String,
        source: ventzell_core::Error,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    /// Process exit code: 2 for configuration, 3 for everything at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime { .. } | CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> CliError {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;

/// Parses, validates, runs and writes one experiment. Returns the outcome
/// and the manifest that was written.
pub fn execute(config: ExperimentConfig, out_dir: &Path) -> Result<(RunOutcome, Manifest), CliError> {
    let resolved = config.validate()?;
    log::info!(
        "{} on '{}': {} paths, {} steps, seed {}",
        resolved.config.kind,
        resolved.config.flow_label(),
        resolved.config.paths,
        resolved.grid.n_steps(),
        resolved.config.seed
    );
    let outcome = run_experiment(&resolved)?;
    let manifest = manifest::write_outputs(out_dir, &resolved.config, &outcome)?;
    Ok((outcome, manifest))
}

/// Reads a config file; parse failures are configuration errors.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}
