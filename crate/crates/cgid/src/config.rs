//! Run configuration files. A config is a TOML document with the sections
//! of [`RunConfig`]; it starts from a preset, the file is layered on top,
//! and `section.key=value` overrides come last.
//!
//! ```toml
//! preset = "desk-banking-like"
//! method = "plrd"
//! seed = 3
//!
//! [data]
//! ood_ratio = 0.4
//!
//! [plrd.weights]
//! fd = 0.0
//! ```

use std::fs;
use std::path::Path;

use cgid_core::experiment::{RunConfig, PRESETS};
use toml::{Table, Value};

use crate::CliError;

pub const DEFAULT_PRESET: &str = "reference";

/// Builds a validated config from an optional preset name, an optional file
/// and dotted overrides. A `preset` key in the file is used when no preset
/// is given explicitly.
pub fn resolve_config(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut layer = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io("cannot read config", path, e))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    let from_file = match layer.remove("preset") {
        Some(Value::String(s)) => Some(s),
        Some(other) => return Err(CliError::Config(format!("preset: expected a string, found {other}"))),
        None => None,
    };
    let name = preset.or(from_file.as_deref()).unwrap_or(DEFAULT_PRESET);
    let base = RunConfig::preset(name).ok_or_else(|| {
        CliError::Config(format!("preset: unknown preset {name:?} (available: {})", PRESETS.join(", ")))
    })?;
    let mut table = Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
    merge(&mut table, layer);
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let text = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| {
        let message = e.message().trim();
        match e.span().and_then(|s| field_path(&text, s.start)) {
            Some(path) => CliError::Config(format!("{path}: {message}")),
            None => CliError::Config(message.to_string()),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// Dotted key of the assignment at byte `offset` of rendered TOML.
fn field_path(text: &str, offset: usize) -> Option<String> {
    let mut section = None;
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            section = Some(trimmed.trim_matches(|c| c == '[' || c == ']').to_string());
        }
        if offset < start + line.len() {
            let key = trimmed.split_once('=')?.0.trim().trim_matches('"');
            return Some(match section {
                Some(s) => format!("{s}.{key}"),
                None => key.to_string(),
            });
        }
        start += line.len();
    }
    None
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(dst)), Value::Table(src)) => merge(dst, src),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML literal
/// and falls back to a plain string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override {spec:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut cur = table;
    for (depth, key) in keys[..keys.len() - 1].iter().enumerate() {
        let entry = cur
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(CliError::Config(format!(
                    "{}: not a section",
                    keys[..=depth].join(".")
                )))
            }
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// The resolved config as TOML, defaults included.
pub fn to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("run configs serialize to TOML")
}
