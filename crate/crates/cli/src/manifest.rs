use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Everything needed to repeat a run: the exact argument vector plus the
/// resolved configuration.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub code_version: String,
    pub outputs: Vec<String>,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub status: String,
    pub results: Value,
}

impl RunManifest {
    pub fn start(command: &str, config: Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            started: Utc::now(),
            finished: None,
            status: "running".into(),
            results: Value::Null,
        }
    }

    /// Records an output file by its name relative to the run directory.
    pub fn output(&mut self, path: &Path) {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.push(name);
    }

    pub fn finish(&mut self, status: &str, out: &Path) -> anyhow::Result<PathBuf> {
        self.finished = Some(Utc::now());
        self.status = status.to_string();
        let path = out.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
