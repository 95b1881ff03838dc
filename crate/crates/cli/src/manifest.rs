//! Output directory handling and the run manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::runner::RunOutcome;
use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config_sha256: String,
    pub pass: bool,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn build(config: &ExperimentConfig, outcome: &RunOutcome) -> Manifest {
        Manifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            kind: config.kind.name().into(),
            config_sha256: sha256_hex(config.canonical_json().as_bytes()),
            pass: outcome.pass,
            files: outcome
                .artifacts
                .iter()
                .map(|a| ManifestEntry {
                    file: a.name.clone(),
                    bytes: a.bytes.len(),
                    sha256: sha256_hex(&a.bytes),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Removes what an earlier manifest in `dir` listed, so that the directory
/// never holds files the new manifest does not mention.
fn clear_previous(dir: &Path) -> Result<(), CliError> {
    let path = dir.join(MANIFEST_NAME);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    let Ok(old) = serde_json::from_str::<Manifest>(&text) else {
        return Err(CliError::Io {
            path: path.display().to_string(),
            message: "existing manifest is unreadable; refusing to overwrite the directory".into(),
        });
    };
    for entry in old.files {
        let p = dir.join(&entry.file);
        if entry.file.contains(['/', '\\']) || !p.exists() {
            continue;
        }
        fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}

pub fn write_outputs(dir: &Path, config: &ExperimentConfig, outcome: &RunOutcome) -> Result<Manifest, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    clear_previous(dir)?;
    for a in &outcome.artifacts {
        let p = dir.join(&a.name);
        fs::write(&p, &a.bytes).map_err(|e| CliError::io(&p, e))?;
    }
    let manifest = Manifest::build(config, outcome);
    let p = dir.join(MANIFEST_NAME);
    fs::write(&p, manifest.to_json()).map_err(|e| CliError::io(&p, e))?;
    Ok(manifest)
}
