//! TOML config loading with `key.path=value` overrides.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<Table>().map_err(|e| CliError::ConfigSyntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// The config file (or an empty table) with every override applied in order.
pub fn load(config: Option<&Path>, overrides: &[String]) -> CliResult<Table> {
    let mut table = match config {
        Some(path) => read_table(path)?,
        None => Table::new(),
    };
    for assignment in overrides {
        apply_override(&mut table, assignment)?;
    }
    Ok(table)
}

/// Parses the right-hand side as a TOML value, or as a bare string if it is
/// not one.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `a.b.c=value`, creating tables as needed. Numeric segments index
/// into existing arrays.
pub fn apply_override(table: &mut Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(assignment, "override must have the form key=value"))?;
    let key = key.trim();
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::config(key, "empty key segment"));
    }
    let value = parse_value(raw.trim());
    let mut slot = table
        .entry(segments[0].to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    for (depth, segment) in segments.iter().enumerate().skip(1) {
        let here = segments[..depth].join(".");
        slot = match slot {
            Value::Table(t) => t.entry(segment.to_string()).or_insert_with(|| Value::Table(Table::new())),
            Value::Array(items) => {
                let i: usize = segment
                    .parse()
                    .map_err(|_| CliError::config(key, format!("`{here}` is an array; expected an index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| CliError::config(key, format!("index {i} out of range for `{here}` (length {len})")))?
            }
            _ => return Err(CliError::config(key, format!("`{here}` is not a table"))),
        };
    }
    *slot = value;
    Ok(())
}

/// Deserializes `table`, naming the offending key on failure.
pub fn resolve<T: DeserializeOwned>(table: Table) -> CliResult<T> {
    serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { String::from("<root>") } else { path };
        CliError::config(key, e.into_inner().message().to_string())
    })
}

pub fn to_table<T: Serialize>(value: &T) -> CliResult<Table> {
    Table::try_from(value).map_err(|e| CliError::config("<resolved config>", e.to_string()))
}

/// Anchors a relative path at the working directory.
pub fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::path::absolute(path).map_err(|e| CliError::io(path, e))
}
