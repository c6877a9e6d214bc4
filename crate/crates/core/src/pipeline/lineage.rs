//! Artifact lineage: each output `x` gets a sidecar `x.lineage.json` holding
//! its own hash and the hashes of the files it was computed from.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageInput {
    /// Relative to the artifact's directory when the input lives there,
    /// otherwise as given.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub artifact: String,
    pub sha256: String,
    pub inputs: Vec<LineageInput>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| PipelineError::io(path, e))?))
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".lineage.json");
    artifact.with_file_name(name)
}

fn display_path(dir: &Path, input: &Path) -> String {
    match input.strip_prefix(dir) {
        Ok(rel) if input.parent() == Some(dir) => rel.to_string_lossy().into_owned(),
        _ => input.to_string_lossy().into_owned(),
    }
}

/// Writes the sidecar for `artifact`, which must already exist.
pub fn record(artifact: &Path, inputs: &[PathBuf]) -> Result<(), PipelineError> {
    let dir = artifact.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::with_capacity(inputs.len());
    for input in inputs {
        entries.push(LineageInput { path: display_path(dir, input), sha256: hash_file(input)? });
    }
    let lineage = Lineage {
        artifact: artifact.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        sha256: hash_file(artifact)?,
        inputs: entries,
    };
    let text = serde_json::to_string_pretty(&lineage).expect("lineage serializes") + "\n";
    let side = sidecar_path(artifact);
    std::fs::write(&side, text).map_err(|e| PipelineError::io(&side, e))
}

pub fn read(artifact: &Path) -> Result<Lineage, PipelineError> {
    let side = sidecar_path(artifact);
    let text = std::fs::read_to_string(&side).map_err(|e| PipelineError::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Lineage(format!("{}: {e}", side.display())))
}

/// Checks that `artifact` and every input it names still hash to the
/// recorded values, following inputs that have sidecars of their own.
pub fn verify(artifact: &Path) -> Result<(), PipelineError> {
    let mut stack = vec![artifact.to_path_buf()];
    let mut seen = std::collections::BTreeSet::new();
    while let Some(path) = stack.pop() {
        if !seen.insert(path.clone()) {
            continue;
        }
        let lineage = read(&path)?;
        let actual = hash_file(&path)?;
        if actual != lineage.sha256 {
            return Err(PipelineError::Lineage(format!("{} changed after it was written", path.display())));
        }
        let dir = path.parent().unwrap_or(Path::new(""));
        for input in &lineage.inputs {
            let p = dir.join(&input.path);
            let h = hash_file(&p).map_err(|_| {
                PipelineError::Lineage(format!("{} was built from {}, which is missing", path.display(), p.display()))
            })?;
            if h != input.sha256 {
                return Err(PipelineError::Lineage(format!(
                    "{} was built from a different {}; rerun the steps after it",
                    path.display(),
                    input.path
                )));
            }
            if sidecar_path(&p).exists() {
                stack.push(p);
            }
        }
    }
    Ok(())
}
