use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use biokge_core::presets::preset_doc;
use biokge_core::training::{ConfigDoc, ConfigIssue, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::TrainConfigArgs;

/// Every violation found while resolving a configuration.
#[derive(Debug)]
pub struct ConfigIssues(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigIssues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|i| {
                if i.key.is_empty() {
                    i.message.clone()
                } else {
                    format!("{}: {}", i.key, i.message)
                }
            })
            .collect();
        write!(f, "invalid configuration: {}", parts.join("; "))
    }
}

impl std::error::Error for ConfigIssues {}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))
}

/// Preset, then config file, then `--set` overrides, then `--seed` and `--workers`.
pub fn train_config(args: &TrainConfigArgs, workers: Option<usize>) -> Result<TrainConfig> {
    let mut doc = match &args.preset {
        Some(name) => preset_doc(name)?,
        None => ConfigDoc::default(),
    };
    if let Some(path) = &args.config {
        doc.merge(&ConfigDoc::parse(&read_text(path)?).map_err(ConfigIssues)?);
    }
    for assignment in &args.set {
        doc.set(assignment).map_err(|i| ConfigIssues(vec![i]))?;
    }
    if let Some(seed) = args.seed {
        doc.set(&format!("seed={seed}")).map_err(|i| ConfigIssues(vec![i]))?;
    }
    if let Some(w) = workers {
        doc.set(&format!("workers={w}")).map_err(|i| ConfigIssues(vec![i]))?;
    }
    Ok(doc.resolve().map_err(ConfigIssues)?)
}

fn issue(key: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        key: key.to_owned(),
        message: message.into(),
    }
}

/// Parses a command-line value as a TOML scalar, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

pub fn split_assignment(assignment: &str) -> Result<(&str, toml::Value)> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigIssues(vec![issue("", format!("override '{assignment}' is not key=value"))]))?;
    Ok((key.trim(), parse_value(raw.trim())))
}

/// Settings struct built from its defaults, a flat TOML file and `key=value` overrides.
/// Keys outside `allowed` are rejected.
pub fn layered<T>(defaults: &T, allowed: &[&str], file: Option<&Path>, sets: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut table = toml::Table::try_from(defaults).context("serializing defaults")?;
    let mut overrides = Vec::new();
    if let Some(path) = file {
        let text = read_text(path)?;
        let parsed: toml::Table = toml::from_str(&text)
            .map_err(|e| ConfigIssues(vec![issue("", format!("malformed config: {}", e.message()))]))?;
        overrides.extend(parsed);
    }
    for assignment in sets {
        let (k, v) = split_assignment(assignment)?;
        overrides.push((k.to_owned(), v));
    }
    let mut issues = Vec::new();
    for (k, v) in overrides {
        if allowed.contains(&k.as_str()) {
            table.insert(k, v);
        } else {
            issues.push(issue(
                &k,
                format!("unknown key; expected one of {}", allowed.join(", ")),
            ));
        }
    }
    if !issues.is_empty() {
        return Err(ConfigIssues(issues).into());
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigIssues(vec![issue("", e.message().to_owned())]).into())
}
