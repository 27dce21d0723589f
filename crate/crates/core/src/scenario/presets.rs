//! Scenario files shipped with the crate.

use crate::error::{Error, Result};
use crate::scenario::config::ScenarioConfig;

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../presets/", $name, ".toml")))),*]
    };
}

/// `(name, TOML source)` for every preset.
pub const PRESETS: &[(&str, &str)] = presets!(
    "heat1d",
    "pme1d_m2",
    "pme1d_m3",
    "doublebump1d_m1",
    "doublebump1d_m2",
    "doublebump1d_m3",
    "fp2d_barenblatt",
    "fp2d_doublebump",
    "ks1d_supercritical",
    "ks1d_m2",
    "ks2d",
);

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (_, src) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::config("preset", format!("unknown preset '{name}'; known: {}", preset_names().join(", "))))?;
    ScenarioConfig::from_toml_str(src)
}
