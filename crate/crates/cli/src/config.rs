//! Flat `key = value` configuration files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "input",
    "header",
    "numeric",
    "bins",
    "backend",
    "alpha",
    "paradigm",
    "max_antecedents",
    "tau_a",
    "tau_c",
    "tau_s",
    "min_support",
    "min_confidence",
    "class",
    "learner",
    "folds",
    "seeds",
    "workers",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Blank lines and `#` comments are skipped; keys may use `-` or `_`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", no + 1)))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("config line {}: unknown key {key:?}", no + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        debug_assert!(KEYS.contains(&key));
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    /// Flag value if given, else the file's value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

/// Comma-separated list, ignoring empty items.
pub fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("{what}: cannot parse {s:?}")))
        })
        .collect()
}
