//! Built-in scenarios, one per acceptance property.

use crate::config::{parse_config, ExperimentConfig};
use crate::error::CliError;

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../presets/", $name, ".toml")))),*]
    };
}

/// `(name, TOML source)` in a fixed order.
pub const PRESETS: &[(&str, &str)] = presets![
    "mass-conservation",
    "scalar-oracle",
    "prop12b-lambda1",
    "prop12b-lambda1-subcritical",
    "prop12b-lambda-half",
    "prop12a-subcritical",
    "prop12a-supercritical",
    "prop12a-supercritical-half",
    "comparison-principle",
    "lyapunov-diffusion",
    "qk-monotone",
    "phi-decay",
    "duhamel-small",
    "thm13-selfsim",
    "thm13-lp",
    "kon-variant-equilibrium",
];

pub fn preset_names() -> Vec<String> {
    PRESETS.iter().map(|(n, _)| n.to_string()).collect()
}

/// Presets whose name contains `filter`; all of them for an empty filter.
pub fn presets(filter: &str) -> Vec<ExperimentConfig> {
    PRESETS
        .iter()
        .filter(|(n, _)| n.contains(filter))
        .map(|(_, src)| parse_config(src).expect("built-in preset parses"))
        .collect()
}

pub fn find_preset(name: &str) -> Result<ExperimentConfig, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| parse_config(src))
        .unwrap_or_else(|| Err(CliError::UnknownPreset { name: name.to_string(), available: preset_names() }))
}
