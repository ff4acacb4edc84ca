//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat only
//! where a component says so (capability records). Each component takes the
//! keys it understands; whatever is left over is reported as unknown.

use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { key: String, line: usize },
    #[error("line {line}: bad value for `{key}`: {message}")]
    Value {
        key: String,
        line: usize,
        message: String,
    },
    #[error("unknown configuration key(s): {}", .0.join(", "))]
    Unknown(Vec<String>),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    // key -> (line, value); repeated keys keep all entries in file order
    entries: BTreeMap<String, Vec<(usize, String)>>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<KvFile, ConfigError> {
        let mut entries: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            entries
                .entry(k.to_string())
                .or_default()
                .push((i + 1, v.trim().to_string()));
        }
        Ok(KvFile { entries })
    }

    /// Removes and parses a single-valued key.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some(mut vals) = self.entries.remove(key) else {
            return Ok(None);
        };
        if vals.len() > 1 {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line: vals[1].0,
            });
        }
        let (line, v) = vals.remove(0);
        v.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
            key: key.to_string(),
            line,
            message: e.to_string(),
        })
    }

    /// Removes every entry of a repeatable key, as `(line, raw value)`.
    pub fn take_all(&mut self, key: &str) -> Vec<(usize, String)> {
        self.entries.remove(key).unwrap_or_default()
    }

    /// Removes a comma-separated list.
    pub fn take_list(&mut self, key: &str) -> Result<Option<Vec<String>>, ConfigError> {
        Ok(self.take::<String>(key)?.map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        }))
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Unknown(self.entries.into_keys().collect()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn takes_and_reports_leftovers() {
        let mut kv = KvFile::parse("# c\na = 3\n\nb = x, y ,\nzzz = 1\n").unwrap();
        assert_eq!(kv.take::<u32>("a").unwrap(), Some(3));
        assert_eq!(kv.take_list("b").unwrap(), Some(vec!["x".into(), "y".into()]));
        assert_eq!(kv.take::<u32>("missing").unwrap(), None);
        assert_eq!(kv.finish(), Err(ConfigError::Unknown(vec!["zzz".into()])));
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(KvFile::parse("a = 1\nnope").unwrap_err(), ConfigError::Syntax { line: 2 });
        let mut kv = KvFile::parse("a = q").unwrap();
        assert!(matches!(kv.take::<u32>("a"), Err(ConfigError::Value { line: 1, .. })));
        let mut kv = KvFile::parse("a = 1\na = 2").unwrap();
        assert!(matches!(kv.take::<u32>("a"), Err(ConfigError::Duplicate { line: 2, .. })));
    }
}
