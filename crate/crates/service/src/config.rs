//! TOML config files with environment overrides.
//!
//! `PREFIX_FIELD=value` sets a top-level field; `PREFIX_TABLE__FIELD=value`
//! reaches into a table. Values are parsed as TOML scalars when possible and
//! taken as strings otherwise.

use std::path::Path;

use serde::de::DeserializeOwned;
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Invalid(String),
}

fn scalar(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `vars` whose names start with `prefix` to `table`.
pub fn overlay(table: &mut Table, prefix: &str, vars: impl IntoIterator<Item = (String, String)>) {
    for (name, raw) in vars {
        let Some(key) = name.strip_prefix(prefix) else { continue };
        let path: Vec<String> = key.split("__").map(|s| s.to_ascii_lowercase()).collect();
        let (last, parents) = path.split_last().expect("split yields one item");
        let mut cursor = &mut *table;
        for p in parents {
            let slot = cursor.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
            if !slot.is_table() {
                *slot = Value::Table(Table::new());
            }
            cursor = slot.as_table_mut().expect("table");
        }
        cursor.insert(last.clone(), scalar(&raw));
    }
}

/// Reads `path` (if any), applies the process environment under `prefix`
/// and deserializes the result.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, prefix: &str) -> Result<T, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
            toml::from_str::<Table>(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    overlay(&mut table, prefix, std::env::vars());
    Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))
}
