//! Run manifests: every command records what it read, the resolved
//! configuration and every file it wrote, so a run can be reproduced from
//! its manifest alone.

use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_digest: Option<String>,
    pub outputs: Vec<String>,
    pub versions: Versions,
    pub wall_time_ms: u64,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub cocluster: String,
    pub cli: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            corpus_digest: None,
            outputs: Vec::new(),
            versions: Versions {
                cocluster: env!("CARGO_PKG_VERSION").to_string(),
                cli: env!("CARGO_PKG_VERSION").to_string(),
            },
            wall_time_ms: 0,
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> cocluster::Result<()> {
        cocluster::serialize::save_json(path, self)
    }
}

/// Default manifest path: `<output>.manifest.json`.
pub fn default_manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}
