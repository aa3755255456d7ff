//! Run manifests: what produced an output file, with the fully resolved
//! configuration so the run can be replayed (`--config <manifest>`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{self, FormatError};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Fixes the timestamp (seconds since the Unix epoch) for reproducible
/// builds of output trees.
pub const SOURCE_DATE_EPOCH: &str = "SOURCE_DATE_EPOCH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_format: u32,
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub artifact_version: String,
    pub format_versions: BTreeMap<String, u32>,
    pub timestamp_unix: u64,
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var(SOURCE_DATE_EPOCH)
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, Value>) -> Self {
        let seed = config.get("seed").and_then(Value::as_u64);
        let format_versions = BTreeMap::from([
            ("csv".to_string(), io::CSV_FORMAT_VERSION),
            ("manifest".to_string(), MANIFEST_FORMAT_VERSION),
            ("photon".to_string(), io::PHOTON_FORMAT_VERSION),
            ("strategy".to_string(), io::STRATEGY_FORMAT_VERSION),
        ]);
        RunManifest {
            manifest_format: MANIFEST_FORMAT_VERSION,
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            format_versions,
            timestamp_unix: timestamp(),
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        io::write_text(path, &self.to_json())
    }
}

/// `<file>.manifest.json` next to a single-file output.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_path(Path::new("a/b.json")), Path::new("a/b.json.manifest.json"));
        assert_eq!(sidecar_path(Path::new("x.txt")), Path::new("x.txt.manifest.json"));
    }

    #[test]
    fn round_trip() {
        let mut cfg = BTreeMap::new();
        cfg.insert("seed".to_string(), Value::from(7u64));
        cfg.insert("lambda".to_string(), Value::from(0.1));
        let mut m = RunManifest::new("fit", cfg);
        m.output(Path::new("s.json"));
        assert_eq!(m.seed, Some(7));
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
