//! Content hashes and the provenance record embedded in every artifact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::read(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// The resolved run configuration plus hashes of every input file.
/// Deliberately free of timestamps so reruns are byte-identical.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub run_config: serde_json::Value,
    /// Input label → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, run_config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            run_config: serde_json::to_value(run_config)?,
            inputs: BTreeMap::new(),
        })
    }

    /// Records the hash of an input file under `label`.
    pub fn input(mut self, label: &str, path: &Path) -> Result<Self> {
        self.inputs.insert(label.to_string(), sha256_file(path)?);
        Ok(self)
    }

    /// Config hash used in reports.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(&self.run_config).expect("json value").as_bytes())
    }
}

/// Sidecar written next to line- or table-oriented outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub output: String,
    pub output_sha256: String,
    pub provenance: Provenance,
}

pub fn manifest_path(output: &Path) -> std::path::PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes `<output>.manifest.json` describing `output`.
pub fn write_manifest(output: &Path, provenance: &Provenance) -> Result<()> {
    let m = Manifest {
        output: output
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        output_sha256: sha256_file(output)?,
        provenance: provenance.clone(),
    };
    write_json(&manifest_path(output), &m)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
