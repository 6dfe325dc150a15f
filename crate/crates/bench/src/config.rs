//! Flat sectioned `key = value` configuration.
//!
//! Files are TOML restricted to one level of `[section]` headers holding
//! scalars and flat arrays. Keys are addressed as `section.key`, and every
//! error names the key it is about.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    /// `section.key`, or `<syntax>` / `<file>` for whole-file problems.
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default)]
pub struct Config {
    table: Table,
    /// Directory that relative data paths resolve against.
    base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("<syntax>", e.message().to_string()))?;
        for (section, value) in &table {
            let Value::Table(inner) = value else {
                return Err(ConfigError::new(section.as_str(), "top-level keys must live in a [section]"));
            };
            for (key, v) in inner {
                let ok = match v {
                    Value::Table(_) => false,
                    Value::Array(items) => items.iter().all(|x| !matches!(x, Value::Table(_) | Value::Array(_))),
                    _ => true,
                };
                if !ok {
                    return Err(ConfigError::new(format!("{section}.{key}"), "nested tables are not allowed"));
                }
            }
        }
        Ok(Self {
            table,
            base_dir: PathBuf::from("."),
        })
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.table.contains_key(section)
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Reject sections and keys outside `allowed` (given as `section.key`).
    pub fn check_known(&self, allowed: &[&str]) -> ConfigResult<()> {
        for (section, value) in &self.table {
            if !allowed.iter().any(|k| k.split('.').next() == Some(section.as_str())) {
                return Err(ConfigError::new(section.as_str(), "unknown section"));
            }
            if let Value::Table(inner) = value {
                for key in inner.keys() {
                    let full = format!("{section}.{key}");
                    if !allowed.contains(&full.as_str()) {
                        return Err(ConfigError::new(full, "unknown key"));
                    }
                }
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&Value> {
        let (section, name) = key.split_once('.')?;
        self.table.get(section)?.as_table()?.get(name)
    }

    /// Dotted override, for example `set("problem.seed", 7)`.
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        let (section, name) = key.split_once('.').expect("dotted key");
        let entry = self
            .table
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        if let Value::Table(t) = entry {
            t.insert(name.to_string(), value.into());
        }
    }

    pub fn get_f64(&self, key: &str) -> ConfigResult<Option<f64>> {
        self.raw(key).map(|v| as_f64(key, v)).transpose()
    }

    pub fn get_u64(&self, key: &str) -> ConfigResult<Option<u64>> {
        self.raw(key).map(|v| as_u64(key, v)).transpose()
    }

    pub fn get_usize(&self, key: &str) -> ConfigResult<Option<usize>> {
        Ok(self.get_u64(key)?.map(|x| x as usize))
    }

    pub fn get_bool(&self, key: &str) -> ConfigResult<Option<bool>> {
        self.raw(key)
            .map(|v| v.as_bool().ok_or_else(|| type_error(key, "a boolean", v)))
            .transpose()
    }

    pub fn get_str(&self, key: &str) -> ConfigResult<Option<&str>> {
        self.raw(key)
            .map(|v| v.as_str().ok_or_else(|| type_error(key, "a string", v)))
            .transpose()
    }

    /// A scalar is accepted as a one-element list.
    pub fn get_f64_list(&self, key: &str) -> ConfigResult<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items.iter().map(|v| as_f64(key, v)).collect::<ConfigResult<_>>().map(Some),
            Some(v) => Ok(Some(vec![as_f64(key, v)?])),
        }
    }

    pub fn get_usize_list(&self, key: &str) -> ConfigResult<Option<Vec<usize>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| as_u64(key, v).map(|x| x as usize))
                .collect::<ConfigResult<_>>()
                .map(Some),
            Some(v) => Ok(Some(vec![as_u64(key, v)? as usize])),
        }
    }

    pub fn require_f64(&self, key: &str) -> ConfigResult<f64> {
        self.get_f64(key)?.ok_or_else(|| missing(key))
    }

    pub fn require_usize(&self, key: &str) -> ConfigResult<usize> {
        self.get_usize(key)?.ok_or_else(|| missing(key))
    }

    pub fn require_str(&self, key: &str) -> ConfigResult<&str> {
        self.get_str(key)?.ok_or_else(|| missing(key))
    }

    /// Either a number or one of the given words, for keys such as
    /// `lambda = "rule"`.
    pub fn get_number_or_word(&self, key: &str, words: &[&str]) -> ConfigResult<Option<NumberOrWord>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) if words.contains(&s.as_str()) => Ok(Some(NumberOrWord::Word(s.clone()))),
            Some(Value::String(s)) => Err(ConfigError::new(
                key,
                format!("expected a number or one of {words:?}, got \"{s}\""),
            )),
            Some(v) => Ok(Some(NumberOrWord::Number(as_f64(key, v)?))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumberOrWord {
    Number(f64),
    Word(String),
}

fn missing(key: &str) -> ConfigError {
    ConfigError::new(key, "required key is missing")
}

fn type_error(key: &str, expected: &str, got: &Value) -> ConfigError {
    ConfigError::new(key, format!("expected {expected}, got {}", got.type_str()))
}

fn as_f64(key: &str, v: &Value) -> ConfigResult<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(type_error(key, "a number", other)),
    }
}

fn as_u64(key: &str, v: &Value) -> ConfigResult<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Integer(i) => Err(ConfigError::new(key, format!("must be nonnegative, got {i}"))),
        other => Err(type_error(key, "a nonnegative integer", other)),
    }
}
