//! Run manifests: every command records what it ran, which files it wrote
//! (with content hashes) and the certified bounds attached to them.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    /// The argv that produced this run.
    pub command: Vec<String>,
    pub spec_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    /// Schedule and step settings, as given on the command line.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedules: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    /// Contraction factor and measured initial displacement of the ledger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d01: Option<f64>,
    /// Certified bounds attached to the outputs, by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub final_bounds: BTreeMap<String, f64>,
    /// Uncertified diagnostics (chaos command).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<String>,
    pub outputs: Vec<OutputRecord>,
    pub wall_clock_seconds: f64,
    /// `certified`, `budget-exceeded` or `experimental`.
    pub status: String,
}

impl RunManifest {
    pub fn new(command: Vec<String>, spec_text: &str) -> Self {
        Self {
            schema_version: 1,
            command,
            spec_sha256: sha256_hex(spec_text.as_bytes()),
            rng_seed: None,
            schedules: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            alpha: None,
            d01: None,
            final_bounds: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            annotations: Vec::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            status: "certified".into(),
        }
    }

    /// Writes `bytes` atomically under `out_dir` and records the hash.
    pub fn write_output(&mut self, out_dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(OutputRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn save(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    /// Checks that every recorded output still exists with its recorded hash.
    pub fn verify_outputs(&self, out_dir: &Path) -> Result<()> {
        for rec in &self.outputs {
            let bytes = fs::read(out_dir.join(&rec.path))
                .with_context(|| format!("missing output {}", rec.path))?;
            let got = sha256_hex(&bytes);
            if got != rec.sha256 {
                anyhow::bail!("output {} hash mismatch", rec.path);
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write-temp-then-rename so readers never observe partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
