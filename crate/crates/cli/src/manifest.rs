//! `manifest.json` in each output directory: one entry per file written,
//! with its digest and the settings that produced it. Entries are keyed and
//! sorted by file name and carry no timestamps, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub files: BTreeMap<String, Entry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub sha256: String,
    pub command: String,
    pub details: Value,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(Self {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                files: BTreeMap::new(),
            });
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(anyhow::anyhow!("{}: {e}", path.display())))
    }

    /// Adds or replaces entries and rewrites the file.
    pub fn record(dir: &Path, command: &str, files: &[(String, String)], details: Value) -> Result<(), CliError> {
        let mut m = Self::load(dir)?;
        for (name, digest) in files {
            m.files.insert(
                name.clone(),
                Entry { sha256: digest.clone(), command: command.into(), details: details.clone() },
            );
        }
        let mut text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Data(e.into()))?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }
}
