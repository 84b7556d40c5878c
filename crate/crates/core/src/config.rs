//! Flat `key = value` experiment configs.
//!
//! Lines are `key = value`; `#` starts a comment; a `[section]` line
//! prefixes the following keys with `section.` (so `[proj]` then `k = 8` is
//! the same as `proj.k = 8`). Every lookup is recorded together with the
//! value used, defaults included, for the run manifest.

use std::sync::Mutex;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    resolved: Mutex<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = if name.is_empty() { String::new() } else { format!("{name}.") };
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", no + 1)))?;
            let key = format!("{section}{}", k.trim());
            if key.is_empty() || key.ends_with('.') {
                return Err(Error::InvalidConfig(format!("line {}: empty key", no + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate key `{key}`")));
            }
        }
        Ok(Config { entries, resolved: Mutex::default() })
    }

    /// Overrides (or adds) a key, as done for command-line flags.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn record(&self, key: &str, value: &str) {
        self.resolved.lock().unwrap().insert(key.to_string(), value.to_string());
    }

    fn convert<T: FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::InvalidConfig(format!("key `{key}`: cannot parse `{v}`")))
    }

    pub fn str(&self, key: &str) -> Result<String> {
        let v = self.entries.get(key).ok_or_else(|| Error::InvalidConfig(format!("missing required key `{key}`")))?;
        self.record(key, v);
        Ok(v.clone())
    }

    pub fn req<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.str(key)?;
        Self::convert(key, &v)
    }

    pub fn get<T: FromStr + Display>(&self, key: &str, default: T) -> Result<T> {
        match self.entries.get(key) {
            Some(v) => {
                self.record(key, v);
                Self::convert(key, v)
            }
            None => {
                self.record(key, &default.to_string());
                Ok(default)
            }
        }
    }

    pub fn opt(&self, key: &str) -> Option<String> {
        let v = self.entries.get(key)?;
        self.record(key, v);
        Some(v.clone())
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>> {
        let v = self.entries.get(key).map(String::as_str).unwrap_or(default).to_string();
        self.record(key, &v);
        v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| Self::convert(key, s)).collect()
    }

    /// Keys present in the file but never read.
    pub fn unused(&self) -> Vec<String> {
        let r = self.resolved.lock().unwrap();
        self.entries.keys().filter(|k| !r.contains_key(*k)).cloned().collect()
    }

    /// Every key read so far with the value used, sorted.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.resolved.lock().unwrap().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let c = Config::parse("experiment = proj # comment\n[proj]\nk = 8\n\n[]\nseed=3\n").unwrap();
        assert_eq!(c.str("experiment").unwrap(), "proj");
        assert_eq!(c.req::<u32>("proj.k").unwrap(), 8);
        assert_eq!(c.req::<u64>("seed").unwrap(), 3);
        assert_eq!(c.get("proj.alpha", 1.5).unwrap(), 1.5);
        let r = c.resolved();
        assert!(r.contains(&("proj.alpha".to_string(), "1.5".to_string())));
    }

    #[test]
    fn missing_key_is_named() {
        let c = Config::parse("a = 1").unwrap();
        let e = c.req::<u32>("proj.k").unwrap_err().to_string();
        assert!(e.contains("proj.k"), "{e}");
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(Config::parse("just words").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("= 2").is_err());
        let c = Config::parse("k = eight").unwrap();
        assert!(c.req::<u32>("k").is_err());
    }

    #[test]
    fn lists_and_unused() {
        let c = Config::parse("ks = 4, 8\nextra = 1").unwrap();
        assert_eq!(c.list::<u32>("ks", "").unwrap(), vec![4, 8]);
        assert_eq!(c.list::<u32>("none", "").unwrap(), Vec::<u32>::new());
        assert_eq!(c.unused(), vec!["extra".to_string()]);
    }
}
