//! `--config` files and setting resolution.
//!
//! A config file is TOML with `key = value` lines. Top-level keys apply to
//! every command that knows them; a `[command]` table applies to that
//! command only and wins over top-level keys. A run manifest (`.json`) is
//! accepted too: its resolved settings are replayed. Command-line flags
//! always win over the file, and the file over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Load { path: String, msg: String },
    #[error("config key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown config key `{key}`{context}")]
    Unknown { key: String, context: String },
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    global: BTreeMap<String, Value>,
    sections: BTreeMap<String, BTreeMap<String, Value>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |msg: String| ConfigError::Load {
            path: path.display().to_string(),
            msg,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: RunManifest = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
            return Ok(Self::from_manifest(&m));
        }
        Self::parse_toml(&text).map_err(err)
    }

    pub fn parse_toml(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let mut cfg = ConfigFile::default();
        for (k, v) in table {
            match v {
                toml::Value::Table(t) => {
                    let section = cfg.sections.entry(normalize(&k)).or_default();
                    for (k2, v2) in t {
                        section.insert(normalize(&k2), to_json(v2)?);
                    }
                }
                other => {
                    cfg.global.insert(normalize(&k), to_json(other)?);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_manifest(m: &RunManifest) -> Self {
        let mut cfg = ConfigFile::default();
        cfg.sections.insert(m.command.clone(), m.config.clone());
        cfg
    }

    /// Settings visible to `command`. Keys must be known to some command
    /// (top level) or to `command` itself (its own table).
    pub fn for_command(
        &self,
        command: &str,
        known: &[&str],
        known_anywhere: &[&str],
    ) -> Result<Settings, ConfigError> {
        let mut values = BTreeMap::new();
        for (k, v) in &self.global {
            if !known_anywhere.contains(&k.as_str()) {
                return Err(ConfigError::Unknown {
                    key: k.clone(),
                    context: String::new(),
                });
            }
            if known.contains(&k.as_str()) {
                values.insert(k.clone(), v.clone());
            }
        }
        for (name, section) in &self.sections {
            for k in section.keys() {
                if name == command && !known.contains(&k.as_str()) {
                    return Err(ConfigError::Unknown {
                        key: k.clone(),
                        context: format!(" in [{command}]"),
                    });
                }
            }
        }
        if let Some(section) = self.sections.get(command) {
            values.extend(section.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Ok(Settings {
            values,
            resolved: BTreeMap::new(),
        })
    }
}

fn to_json(v: toml::Value) -> Result<Value, String> {
    serde_json::to_value(v).map_err(|e| e.to_string())
}

/// Per-command settings from the config file, plus the record of every
/// value the command finally used.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, Value>,
    resolved: BTreeMap<String, Value>,
}

impl Settings {
    fn from_file<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    msg: e.to_string(),
                }),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, v: &T) {
        let json = serde_json::to_value(v).expect("settings serialize");
        self.resolved.insert(key.to_string(), json);
    }

    /// Flag, else config file, else `default`.
    pub fn pick<T: DeserializeOwned + Serialize>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, ConfigError> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Flag, else config file; `None` if neither sets it.
    pub fn pick_opt<T: DeserializeOwned + Serialize>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, ConfigError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// A switch: set by the flag, or by `key = true` in the file.
    pub fn pick_switch(&mut self, key: &str, flag: bool) -> Result<bool, ConfigError> {
        let v = flag || self.from_file(key)?.unwrap_or(false);
        self.record(key, &v);
        Ok(v)
    }

    pub fn resolved(&self) -> &BTreeMap<String, Value> {
        &self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KNOWN: &[&str] = &["seed", "lambda", "paths"];

    #[test]
    fn precedence() {
        let cfg = ConfigFile::parse_toml("seed = 3\nlambda = 0.5\n[fit]\nlambda = 0.25\n").unwrap();
        let mut s = cfg.for_command("fit", KNOWN, KNOWN).unwrap();
        assert_eq!(s.pick("lambda", None, 1.0).unwrap(), 0.25);
        assert_eq!(s.pick("seed", Some(9u64), 0).unwrap(), 9);
        assert_eq!(s.pick("paths", None, 100usize).unwrap(), 100);
        assert_eq!(s.resolved().len(), 3);
        let mut other = cfg.for_command("evaluate", KNOWN, KNOWN).unwrap();
        assert_eq!(other.pick("lambda", None, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn unknown_and_bad_keys() {
        let cfg = ConfigFile::parse_toml("sead = 3\n").unwrap();
        assert!(cfg.for_command("fit", KNOWN, KNOWN).is_err());
        let cfg = ConfigFile::parse_toml("[fit]\nout_dir = 'x'\n").unwrap();
        assert!(cfg.for_command("fit", KNOWN, &["out_dir"]).is_err());
        assert!(cfg.for_command("search", &["out_dir"], &["out_dir"]).is_ok());
        let cfg = ConfigFile::parse_toml("seed = 'x'\n").unwrap();
        let mut s = cfg.for_command("fit", KNOWN, KNOWN).unwrap();
        assert!(s.pick("seed", None, 0u64).is_err());
    }

    #[test]
    fn dashes_are_underscores() {
        let cfg = ConfigFile::parse_toml("qtrain-quantile = 0.9\n").unwrap();
        let mut s = cfg.for_command("fit", &["qtrain_quantile"], &["qtrain_quantile"]).unwrap();
        assert_eq!(s.pick("qtrain_quantile", None, 0.5).unwrap(), 0.9);
    }
}
