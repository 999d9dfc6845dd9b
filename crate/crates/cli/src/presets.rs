//! Named scenarios shipped with the crate (see `scenarios/`).

use crate::config::{ConfigError, RunConfig};

pub const PRESETS: &[(&str, &str)] = &[
    ("figure3", include_str!("../scenarios/figure3.toml")),
    ("figure4", include_str!("../scenarios/figure4.toml")),
    ("figure5", include_str!("../scenarios/figure5.toml")),
    ("figure5_sigma03", include_str!("../scenarios/figure5_sigma03.toml")),
    ("figure5_sigma07", include_str!("../scenarios/figure5_sigma07.toml")),
    ("figure5_sigma09", include_str!("../scenarios/figure5_sigma09.toml")),
    ("linear_symmetric", include_str!("../scenarios/linear_symmetric.toml")),
    ("linear_asymmetric", include_str!("../scenarios/linear_asymmetric.toml")),
    ("nonlinear", include_str!("../scenarios/nonlinear.toml")),
    ("blowup_sigma12", include_str!("../scenarios/blowup_sigma12.toml")),
];

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load_preset(name: &str) -> Result<RunConfig, ConfigError> {
    let src = preset_source(name).ok_or_else(|| {
        let known: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
        ConfigError::new("scenario", format!("unknown preset `{name}`; known: {}", known.join(", ")))
    })?;
    RunConfig::from_toml(src)
}
