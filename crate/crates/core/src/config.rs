//! Line-oriented `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys must be unique.
//! Consumers take the keys they understand and then call [`KvConfig::finish`],
//! which rejects anything left over: unknown keys are an error, not a warning.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {}: empty key", lineno + 1)));
            }
            if cfg
                .entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::config(format!(
                    "line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets `key`, replacing any value read from a file. Command-line overrides use this.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes and returns the raw value of `key`.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Removes `key` and parses it.
    pub fn take_parsed<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(format!("{key}={v}: {e}"))),
        }
    }

    /// Removes every key starting with `prefix`, in key order.
    pub fn take_prefixed(&mut self, prefix: &str) -> Vec<(String, String)> {
        let keys: Vec<String> = self
            .entries
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        keys.into_iter()
            .map(|k| {
                let v = self.entries.remove(&k).unwrap_or_default();
                (k, v)
            })
            .collect()
    }

    /// Fails if any key has not been consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            Err(Error::config(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let cfg = KvConfig::parse("# header\n\nmodel = clock\nb_convention=aligned\n").unwrap();
        let mut cfg = cfg;
        assert_eq!(cfg.take("model").as_deref(), Some("clock"));
        assert_eq!(cfg.take("b_convention").as_deref(), Some("aligned"));
        cfg.finish().unwrap();
    }

    #[test]
    fn rejects_missing_equals_and_duplicates() {
        assert!(matches!(
            KvConfig::parse("model clock"),
            Err(Error::Config(_))
        ));
        assert!(matches!(KvConfig::parse("a=1\na=2"), Err(Error::Config(_))));
    }

    #[test]
    fn leftover_keys_are_errors() {
        let mut cfg = KvConfig::parse("model=clock\ncolour=blue").unwrap();
        cfg.take("model");
        let err = cfg.finish().unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn overrides_win() {
        let mut cfg = KvConfig::parse("seed=1").unwrap();
        cfg.set("seed", "9");
        assert_eq!(cfg.take_parsed::<u64>("seed").unwrap(), Some(9));
    }
}
