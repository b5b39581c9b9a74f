//! Optional TOML configuration. Every key mirrors a command-line flag (with
//! underscores); flags win over the file, the file wins over defaults.

use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthArg {
    Words,
    Bits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetArg {
    All,
    Subject,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionArg {
    Critical,
    Spillover,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub max_surprisal_bits: Option<f64>,
    pub min_sentence_len: Option<usize>,
    pub frequency_fallback: Option<f64>,
    pub rt_min_ms: Option<f64>,
    pub rt_max_ms: Option<f64>,
    pub length_measure: Option<LengthArg>,
    pub subset: Option<SubsetArg>,
    pub region: Option<RegionArg>,
    pub dep_type_dummies: Option<bool>,
    pub participant_dummies: Option<bool>,
    pub strict_frequency: Option<bool>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// `flag`, else the config value, else `default`.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// A switch is on when given on the command line or set in the config.
pub fn switch(flag: bool, config: Option<bool>) -> bool {
    flag || config.unwrap_or(false)
}
