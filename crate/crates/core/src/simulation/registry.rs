//! Scenario files shipped with the crate.

use super::config::ScenarioConfig;
use crate::error::{Error, Result};

const BUNDLED: [(&str, &str); 6] = [
    ("outcome_error", include_str!("../../scenarios/outcome_error.toml")),
    ("correlated_error", include_str!("../../scenarios/correlated_error.toml")),
    ("correlated_error_log3", include_str!("../../scenarios/correlated_error_log3.toml")),
    ("null_effect", include_str!("../../scenarios/null_effect.toml")),
    ("misclassified_events", include_str!("../../scenarios/misclassified_events.toml")),
    ("gamma_error", include_str!("../../scenarios/gamma_error.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

pub fn bundled_scenario(name: &str) -> Result<ScenarioConfig> {
    let text = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::InvalidConfig(format!("no bundled scenario named '{name}'")))?;
    ScenarioConfig::from_toml_str(text)
}
