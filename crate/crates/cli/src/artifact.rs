//! The model directory written by `fit` and read by `predict` and `diagnose`.

use std::fs;
use std::path::Path;

use cspbart_core::{Encoding, ModelSpec, PosteriorDraws};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::fit::FitConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const DRAWS: &str = "draws.json";

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub version: String,
    pub seed: u64,
    pub config: FitConfig,
    pub spec: ModelSpec,
    pub encoding: Encoding,
    pub training_rows: usize,
    pub dropped_rows: usize,
    pub holdout_rows: usize,
    pub warnings: Vec<String>,
}

/// Comment lines opening every text output: tool version, seed and the full
/// resolved configuration as one JSON line.
pub fn header(seed: u64, config: &impl Serialize) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    format!("# cspbart {}\n# seed {seed}\n# config {json}\n", tool_version())
}

pub fn write_text(dir: &Path, name: &str, header: &str, body: &str) -> CliResult<()> {
    fs::write(dir.join(name), format!("{header}{body}"))
        .map_err(|e| CliError::data(format!("cannot write `{}`: {e}", dir.join(name).display())))
}

pub fn save(dir: &Path, manifest: &Manifest, draws: &PosteriorDraws) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create `{}`: {e}", dir.display())))?;
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(manifest)? + "\n")?;
    fs::write(dir.join(DRAWS), serde_json::to_string(draws)? + "\n")?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::data(format!("cannot read model `{}`: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("format_version").and_then(serde_json::Value::as_u64);
    if found != Some(u64::from(FORMAT_VERSION)) {
        return Err(CliError::data(format!(
            "model format version {} is not supported (expected {FORMAT_VERSION})",
            found.map_or("missing".to_string(), |v| v.to_string())
        )));
    }
    Ok(serde_json::from_value(value)?)
}

pub fn load(dir: &Path) -> CliResult<(Manifest, PosteriorDraws)> {
    let manifest = load_manifest(dir)?;
    let path = dir.join(DRAWS);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::data(format!("cannot read draws `{}`: {e}", path.display())))?;
    Ok((manifest, serde_json::from_str(&text)?))
}
