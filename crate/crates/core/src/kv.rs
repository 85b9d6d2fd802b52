//! The line-based `key = value` grammar shared by manifests, synthetic
//! specs and run configs. `#` starts a comment; blank lines are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct KvFile {
    pub path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(parse_err("empty key".into()));
            }
            if entries.insert(k.to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(parse_err(format!("duplicate key {k:?}")));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("{}: missing key {key:?}", self.path.display())))
    }

    pub fn error(&self, key: &str, message: impl std::fmt::Display) -> Error {
        match self.entries.get(key) {
            Some(&(line, _)) if line > 0 => Error::Parse {
                path: self.path.clone(),
                line,
                message: format!("{key}: {message}"),
            },
            _ => Error::Config(format!("{key}: {message}")),
        }
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.error(key, format!("cannot parse {v:?}"))),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse_value(key)?.unwrap_or(default))
    }

    /// Errors on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !known.contains(&k.as_str()) {
                return Err(self.error(k, "unknown key"));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }
}

/// Parses `name:value,name:value` lists, keeping order.
pub fn parse_pairs<T: FromStr>(s: &str) -> std::result::Result<Vec<(String, T)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (n, v) = p.split_once(':').ok_or_else(|| format!("expected name:value, got {p:?}"))?;
            let v = v.trim().parse().map_err(|_| format!("bad value in {p:?}"))?;
            Ok((n.trim().to_string(), v))
        })
        .collect()
}
