//! Flat `key = value` configuration merged with command-line flags.
//!
//! Precedence, highest first: command-line flag, config file, the
//! `LCP_SEED` environment variable (seed only), built-in default.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "LCP_SEED";

/// Every setting any subcommand reads. Keys in the config file use the
/// same names as the flags, with `-` and `_` interchangeable.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub alpha: Option<String>,
    // simulate
    pub generator: Option<String>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub method: Option<String>,
    pub learner: Option<String>,
    // predict and tune
    pub calib: Option<String>,
    pub test: Option<String>,
    pub data: Option<String>,
    pub train: Option<String>,
    pub features: Option<String>,
    pub score_col: Option<String>,
    pub y_col: Option<String>,
    pub pred_col: Option<String>,
    pub weight_col: Option<String>,
    pub predictor: Option<String>,
    pub localizer: Option<String>,
    /// Bandwidth paired with `kind` when no `localizer` string is given.
    pub h: Option<String>,
    pub grid_size: Option<usize>,
    // tune
    pub kind: Option<String>,
    pub h_grid: Option<String>,
    pub axis: Option<String>,
    pub omega: Option<f64>,
    pub bootstrap: Option<usize>,
}

fn normalize_key(key: &str) -> String {
    let key = key.trim().replace('-', "_");
    match key.as_str() {
        "gen" => "generator".into(),
        _ => key,
    }
}

/// Parses `key = value` lines. Blank lines, `#`/`;` comments and
/// `[section]` headers are ignored; a later duplicate key wins.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key = value, got '{line}'", lineno + 1))
        })?;
        let value = value.trim().trim_matches('"');
        map.insert(normalize_key(key), value.to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_text(&text)
}

/// Overlays `flags` on `file` and types the result.
pub fn resolve(
    file: BTreeMap<String, String>,
    flags: Vec<(&'static str, Option<String>)>,
    env_seed: Option<String>,
) -> Result<RunConfig> {
    let mut merged = BTreeMap::new();
    if let Some(seed) = env_seed {
        merged.insert("seed".to_string(), seed);
    }
    merged.extend(file);
    for (key, value) in flags {
        if let Some(v) = value {
            merged.insert(key.to_string(), v);
        }
    }
    // one header row and one value row, typed by serde through the csv reader
    let headers = csv::StringRecord::from(merged.keys().map(String::as_str).collect::<Vec<_>>());
    let values = csv::StringRecord::from(merged.values().map(String::as_str).collect::<Vec<_>>());
    values
        .deserialize(Some(&headers))
        .map_err(|e| CliError::Usage(format!("configuration: {e}")))
}

impl RunConfig {
    pub fn require<'a, T>(&'a self, value: &'a Option<T>, key: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("missing required setting '{key}'")))
    }
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(s: &str, key: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{key}: '{p}' is not a number")))
        })
        .collect()
}
