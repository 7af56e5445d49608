//! Strict flat config files.
//!
//! The format is a minimal sectioned key-value grammar:
//!
//! ```text
//! # comment
//! [model]
//! beta_star = 0.5, 0.5
//! rho = 0.7
//!
//! [region]
//! p_list = 1, 1.5, 2, 3, inf
//! ```
//!
//! Every key must live under a `[section]` header and is addressed as
//! `section.key`. Parsing is strict both ways: a key a command does not
//! understand is an error naming it, and so is a missing required key.
//! Strictness is what keeps a typo like `alpa = 0.05` from silently
//! running at the default.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: {msg} (value `{value}`)")]
    BadValue {
        key: String,
        value: String,
        msg: String,
    },
    #[error("unknown config {}: {}", if .0.len() == 1 { "key" } else { "keys" }, .0.join(", "))]
    UnknownKeys(Vec<String>),
}

/// Parsed config: raw string values addressed by `section.key`, plus a
/// visited-set so `finish` can reject keys no getter asked for.
#[derive(Debug)]
pub struct Config {
    values: BTreeMap<String, String>,
    visited: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.split_once('#') {
                Some((before, _)) => before,
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    path: path.to_string(),
                    line: line_no,
                    msg: "unterminated section header".to_string(),
                })?;
                let name = name.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(ConfigError::Syntax {
                        path: path.to_string(),
                        line: line_no,
                        msg: format!("bad section name `{name}`"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: path.to_string(),
                line: line_no,
                msg: "expected `key = value` or `[section]`".to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Syntax {
                    path: path.to_string(),
                    line: line_no,
                    msg: format!("bad key name `{key}`"),
                });
            }
            let section = section.as_ref().ok_or_else(|| ConfigError::Syntax {
                path: path.to_string(),
                line: line_no,
                msg: format!("key `{key}` appears before any [section] header"),
            })?;
            let full = format!("{section}.{key}");
            if values.contains_key(&full) {
                return Err(ConfigError::Syntax {
                    path: path.to_string(),
                    line: line_no,
                    msg: format!("duplicate key `{full}`"),
                });
            }
            values.insert(full, value.trim().to_string());
        }
        Ok(Self {
            values,
            visited: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text, &path.display().to_string()).map_err(|e| e.to_string())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key)?;
        self.visited.borrow_mut().insert(key.to_string());
        Some(v.as_str())
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
        let v: f64 = value.parse().map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            msg: "expected a number".to_string(),
        })?;
        if v.is_nan() {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                msg: "NaN is not a valid value".to_string(),
            });
        }
        Ok(v)
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key).map(|v| Self::parse_f64(key, v)).transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64_opt(key)?
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    msg: "expected a nonnegative integer".to_string(),
                })
            })
            .transpose()
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.usize_opt(key)?
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    msg: "expected a nonnegative integer".to_string(),
                })
            })
            .transpose()
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(ConfigError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
                msg: "expected `true` or `false`".to_string(),
            }),
        }
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        self.raw(key).map(|s| s.to_string())
    }

    /// Comma-separated list of numbers; `inf` is accepted.
    pub fn require_f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let raw = self
            .raw(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        raw.split(',')
            .map(|part| Self::parse_f64(key, part.trim()))
            .collect()
    }

    pub fn require_usize_list(&self, key: &str) -> Result<Vec<usize>, ConfigError> {
        let raw = self
            .raw(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        raw.split(',')
            .map(|part| {
                let part = part.trim();
                part.parse::<usize>().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: part.to_string(),
                    msg: "expected a nonnegative integer".to_string(),
                })
            })
            .collect()
    }

    /// Semicolon-separated list of comma-separated vectors, e.g.
    /// `0.5, 0.5; 1, 0` is two vectors in R^2.
    pub fn require_vector_list(&self, key: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
        let raw = self
            .raw(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        raw.split(';')
            .map(|group| {
                group
                    .split(',')
                    .map(|part| Self::parse_f64(key, part.trim()))
                    .collect()
            })
            .collect()
    }

    /// Rejects any key never requested by a getter, naming each one.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let visited = self.visited.borrow();
        let unknown: Vec<String> = self
            .values
            .keys()
            .filter(|k| !visited.contains(*k))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::UnknownKeys(unknown))
        }
    }

    /// Canonical re-serialization: sections and keys sorted, values as
    /// written. This is the `config.echo` artifact.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (full, value) in &self.values {
            let (section, key) = full.split_once('.').expect("all keys are section scoped");
            if section != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Nested map view for JSON reports.
    pub fn as_json(&self) -> serde_json::Value {
        let mut sections: BTreeMap<&str, serde_json::Map<String, serde_json::Value>> =
            BTreeMap::new();
        for (full, value) in &self.values {
            let (section, key) = full.split_once('.').expect("all keys are section scoped");
            sections
                .entry(section)
                .or_default()
                .insert(key.to_string(), serde_json::Value::String(value.clone()));
        }
        let mut root = serde_json::Map::new();
        for (section, map) in sections {
            root.insert(section.to_string(), serde_json::Value::Object(map));
        }
        serde_json::Value::Object(root)
    }
}
