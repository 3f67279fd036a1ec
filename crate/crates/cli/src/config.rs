//! Optional TOML defaults. Command-line flags win over the file, and the file
//! wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

/// Either `theta = "10,10,1,1"` or `theta = [10, 10, 1, 1]`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ThetaValue {
    Text(String),
    List(Vec<f64>),
}

impl ThetaValue {
    pub fn to_text(&self) -> String {
        match self {
            ThetaValue::Text(s) => s.clone(),
            ThetaValue::List(v) => v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub theta: Option<ThetaValue>,
    pub method: Option<String>,
    pub kernel: Option<String>,
    pub gamma: Option<f64>,
    pub degree: Option<u32>,
    pub coef0: Option<f64>,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub epochs: Option<u64>,
    pub iterations: Option<u64>,
    pub standardize: Option<bool>,
    pub grid: Option<bool>,
    pub grid_folds: Option<usize>,
    pub folds: Option<usize>,
    pub c_grid: Option<Vec<f64>>,
    pub gamma_grid: Option<Vec<f64>>,
    pub methods: Option<Vec<String>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// First of flag, config value, default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
