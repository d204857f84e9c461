//! Sidecar `<output>.manifest.json` files recording how an output was made.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST_SCHEMA: &str = "qfp-manifest/1";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub config_paths: Vec<String>,
    pub seeds: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub tool_version: &'static str,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            schema: MANIFEST_SCHEMA,
            command: command.to_string(),
            argv: std::env::args().collect(),
            config_paths: Vec::new(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: now(),
        }
    }

    pub fn config(mut self, paths: impl IntoIterator<Item = String>) -> Self {
        self.config_paths.extend(paths);
        self
    }

    pub fn seed(mut self, name: &str, hex: String) -> Self {
        self.seeds.insert(name.to_string(), hex);
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes one manifest next to every recorded output.
    pub fn write_all(&self) -> Result<()> {
        for out in &self.outputs {
            let path = manifest_path(Path::new(out));
            let text = serde_json::to_string_pretty(self).expect("manifest serializes");
            std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Writes `contents` to `path` and records it.
pub fn write_output(manifest: &mut RunManifest, path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path);
    Ok(())
}
