//! Run manifests: what ran, from which config, producing which bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// Checksum record of one emitted data file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    /// Data rows, excluding the header line.
    pub rows: u64,
}

/// Structured record of one experiment run; scalar fields first so the
/// TOML serializer keeps tables at the end.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub replications: u32,
    pub threads: usize,
    pub quick: bool,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
    pub summary: BTreeMap<String, toml::Value>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("manifest serialize: {e}")))?;
        let path = dir.join("manifest.toml");
        std::fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

/// Hex SHA-256 of a byte string, prefixed with the algorithm name.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{}", hex::encode(hasher.finalize()))
}

/// Convenience builders for summary values.
pub fn summary_f64(map: &mut BTreeMap<String, toml::Value>, key: &str, value: f64) {
    map.insert(key.to_string(), toml::Value::Float(value));
}

pub fn summary_int(map: &mut BTreeMap<String, toml::Value>, key: &str, value: i64) {
    map.insert(key.to_string(), toml::Value::Integer(value));
}

pub fn summary_str(map: &mut BTreeMap<String, toml::Value>, key: &str, value: impl Into<String>) {
    map.insert(key.to_string(), toml::Value::String(value.into()));
}

pub fn summary_bool(map: &mut BTreeMap<String, toml::Value>, key: &str, value: bool) {
    map.insert(key.to_string(), toml::Value::Boolean(value));
}
