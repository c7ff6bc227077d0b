use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

/// Writes `manifest.json` into `dir`: the command, the configuration echo,
/// crate versions, the files produced and command-specific details.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, outputs: &[PathBuf], details: Value) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let config: Map<String, Value> = cfg.to_pairs().into_iter().map(|(k, v)| (k.to_owned(), Value::String(v))).collect();
    let manifest = json!({
        "command": command,
        "config": config,
        "versions": {
            "rbvi": env!("CARGO_PKG_VERSION"),
            "artifact_format": crate::offline::ARTIFACT_VERSION,
        },
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "details": details,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Artifact(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}
