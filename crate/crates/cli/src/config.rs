//! `key = value` config files (TOML syntax) merged under command-line flags.

use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::CliError;

/// Resolves settings from flags first, then the config file, and records every
/// resolved value for the report's config echo.
pub struct Resolver {
    file: toml::Table,
    echo: Map<String, Value>,
}

impl Resolver {
    pub fn new(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
        };
        let mut echo = Map::new();
        if let Some(p) = path {
            echo.insert("config_file".into(), Value::String(p.display().to_string()));
        }
        Ok(Self { file, echo })
    }

    fn file_value(&self, key: &str) -> Option<String> {
        let v = self
            .file
            .get(key)
            .or_else(|| self.file.get(&key.replace('-', "_")))?;
        Some(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        })
    }

    /// Raw string for `key`, flag first.
    pub fn string(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.or_else(|| self.file_value(key));
        if let Some(s) = &v {
            self.echo.insert(key.into(), Value::String(s.clone()));
        }
        v
    }

    pub fn parsed<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => match self.file_value(key) {
                Some(s) => s
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {s:?}")))?,
                None => default,
            },
        };
        self.echo.insert(key.into(), json_scalar(&v.to_string()));
        Ok(v)
    }

    pub fn optional<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file_value(key) {
                Some(s) => Some(
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {s:?}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.echo.insert(key.into(), json_scalar(&v.to_string()));
        }
        Ok(v)
    }

    /// A flag that is on if given on the command line or set true in the file.
    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = flag
            || match self.file_value(key) {
                Some(s) => s
                    .parse::<bool>()
                    .map_err(|_| CliError::Usage(format!("config key {key}: expected true or false")))?,
                None => false,
            };
        self.echo.insert(key.into(), Value::Bool(v));
        Ok(v)
    }

    pub fn list(&mut self, key: &str, flag: Option<String>) -> Result<Option<Vec<f64>>, CliError> {
        match self.string(key, flag) {
            None => Ok(None),
            Some(s) => {
                let values = parse_list(&s).map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
                self.echo.insert(key.into(), Value::from(values.clone()));
                Ok(Some(values))
            }
        }
    }

    pub fn echo(&self) -> Value {
        Value::Object(self.echo.clone())
    }
}

fn json_scalar(s: &str) -> Value {
    serde_json::from_str::<Value>(s)
        .ok()
        .filter(|v| v.is_number() || v.is_boolean())
        .unwrap_or_else(|| Value::String(s.to_string()))
}

/// Comma- or whitespace-separated reals, optionally in brackets.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    let values = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(values)
}
