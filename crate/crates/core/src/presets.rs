//! Shipped training configurations: the best BioKG configuration of each model and the
//! best ComplEx configurations (scratch and pretrained) of the four benchmark tasks.

use crate::error::{Error, Result};
use crate::training::{issues_to_error, validate_config, ConfigDoc, TrainConfig};

pub const PRESETS: [(&str, &str); 14] = [
    ("complex-biokg", include_str!("../presets/complex-biokg.toml")),
    (
        "complex-ddi-efficacy",
        include_str!("../presets/complex-ddi-efficacy.toml"),
    ),
    (
        "complex-ddi-minerals",
        include_str!("../presets/complex-ddi-minerals.toml"),
    ),
    (
        "complex-dep-fda-exp",
        include_str!("../presets/complex-dep-fda-exp.toml"),
    ),
    ("complex-dpi-fda", include_str!("../presets/complex-dpi-fda.toml")),
    (
        "complex-p-ddi-efficacy",
        include_str!("../presets/complex-p-ddi-efficacy.toml"),
    ),
    (
        "complex-p-ddi-minerals",
        include_str!("../presets/complex-p-ddi-minerals.toml"),
    ),
    (
        "complex-p-dep-fda-exp",
        include_str!("../presets/complex-p-dep-fda-exp.toml"),
    ),
    ("complex-p-dpi-fda", include_str!("../presets/complex-p-dpi-fda.toml")),
    ("conve-biokg", include_str!("../presets/conve-biokg.toml")),
    ("distmult-biokg", include_str!("../presets/distmult-biokg.toml")),
    ("rotate-biokg", include_str!("../presets/rotate-biokg.toml")),
    ("transe-biokg", include_str!("../presets/transe-biokg.toml")),
    ("transh-biokg", include_str!("../presets/transh-biokg.toml")),
];

/// Config text of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

fn unknown(name: &str) -> Error {
    let names: Vec<&str> = preset_names().collect();
    Error::Config(format!("unknown preset '{name}'; available: {}", names.join(", ")))
}

/// Parsed preset, for layering overrides on top.
pub fn preset_doc(name: &str) -> Result<ConfigDoc> {
    let text = preset_text(name).ok_or_else(|| unknown(name))?;
    ConfigDoc::parse(text).map_err(|issues| issues_to_error(&issues))
}

pub fn load_preset(name: &str) -> Result<TrainConfig> {
    let text = preset_text(name).ok_or_else(|| unknown(name))?;
    validate_config(text).map_err(|issues| issues_to_error(&issues))
}
