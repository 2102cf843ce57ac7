//! `key = value` text used by config files and checkpoint snapshots.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{config_err, Result};

/// Ordered key/value pairs; later duplicates overwrite earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses UTF-8 lines of `key = value`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected `key = value`, got {raw:?}", lineno + 1))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(config_err!("line {}: empty key", lineno + 1));
            }
            kv.entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(kv)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn extend(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Parses `key` if present.
    pub fn parse_opt<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| config_err!("invalid value {raw:?} for {key}")),
        }
    }

    /// Parses a comma-separated list if present.
    pub fn parse_list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| config_err!("invalid list {raw:?} for {key}")))
                .collect::<Result<Vec<V>>>()
                .map(Some),
        }
    }

    /// Fails on any key outside `allowed` (matched by exact name).
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(config_err!("unknown key {k:?}")),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub(crate) fn join_list<V: Display>(items: &[V]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
