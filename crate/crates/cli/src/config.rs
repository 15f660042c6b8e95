//! Flat `key = value` experiment configuration with typed, recorded lookups.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Parsed configuration. Every lookup records the value it resolved to,
/// so the echo reproduces the run when fed back as a config.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    echo: BTreeMap<String, String>,
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment. A JSON object is
    /// read as a run sidecar and its `config` member is used.
    pub fn parse(text: &str) -> CliResult<Self> {
        if text.trim_start().starts_with('{') {
            return Self::from_sidecar(text);
        }
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).ok_or_else(|| CliError::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            if entries.insert(k.clone(), v).is_some() {
                return Err(CliError::Parse {
                    line: idx + 1,
                    message: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Self {
            entries,
            echo: BTreeMap::new(),
        })
    }

    fn from_sidecar(text: &str) -> CliResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let obj = value
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| CliError::Parse {
                line: 1,
                message: "JSON config must have a `config` object".into(),
            })?;
        let mut entries = BTreeMap::new();
        for (k, v) in obj {
            let s = v.as_str().ok_or_else(|| CliError::Parse {
                line: 1,
                message: format!("config value for `{k}` must be a string"),
            })?;
            entries.insert(k.clone(), s.to_string());
        }
        Ok(Self {
            entries,
            echo: BTreeMap::new(),
        })
    }

    /// Applies `key=value` overrides; they replace file entries.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> CliResult<()> {
        for o in overrides {
            let (k, v) = split_pair(o)
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not `key=value`")))?;
            self.entries.insert(k, v);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.entries.get(key).cloned();
        if let Some(v) = &v {
            self.echo.insert(key.to_string(), v.clone());
        }
        v
    }

    pub fn optional<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Config(format!("bad value `{v}` for `{key}`: {e}"))),
        }
    }

    pub fn required<T: FromStr>(&mut self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.optional(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    /// Looks up `key`, recording `default` in the echo when it is absent.
    pub fn or<T: FromStr + ToString>(&mut self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.optional(key)? {
            Some(v) => Ok(v),
            None => {
                self.echo.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    /// Like [`Config::or`] with the default given as text.
    pub fn or_parse<T: FromStr>(&mut self, key: &str, default: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let v: String = self.or(key, default.to_string())?;
        v.parse()
            .map_err(|e| CliError::Config(format!("bad value `{v}` for `{key}`: {e}")))
    }

    /// Comma-separated list; `default` is used (and echoed) when absent.
    pub fn list<T: FromStr>(&mut self, key: &str, default: &str) -> CliResult<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = match self.raw(key) {
            Some(v) => v,
            None => {
                self.echo.insert(key.to_string(), default.to_string());
                default.to_string()
            }
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Config(format!("bad entry `{s}` in `{key}`: {e}")))
            })
            .collect()
    }

    pub fn flag(&mut self, key: &str, default: bool) -> CliResult<bool> {
        let v = match self.raw(key) {
            None => {
                self.echo.insert(key.to_string(), on_off(default).into());
                return Ok(default);
            }
            Some(v) => v,
        };
        match v.as_str() {
            "on" | "true" | "yes" | "1" => Ok(true),
            "off" | "false" | "no" | "0" => Ok(false),
            _ => Err(CliError::Config(format!("bad switch `{v}` for `{key}`"))),
        }
    }

    /// Rejects keys that no lookup consumed, which catches typos.
    pub fn finish(&self) -> CliResult<()> {
        let unused: Vec<&str> = self
            .entries
            .keys()
            .filter(|k| !self.echo.contains_key(*k))
            .map(String::as_str)
            .collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "unused config keys: {}",
                unused.join(", ")
            )))
        }
    }

    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.echo
    }
}

pub fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}
