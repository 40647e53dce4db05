//! Scenario library shipped with the binary.

use std::path::Path;

use crate::config::{load_scenario, parse_scenario, ScenarioConfig};
use crate::error::{CliError, CliResult};

macro_rules! shipped {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".toml")))),*]
    };
}

/// `(name, file contents)` of every shipped scenario.
pub const SHIPPED: &[(&str, &str)] = shipped![
    "fig1a_ellipsoid",
    "fig1b_smoothmax",
    "fig4a_pentagon",
    "fig4b_square",
    "fig4c_triangle",
    "fig5a_pentagon_compare",
    "fig5b_pentagon_compare",
    "fig5c_square_compare",
    "fig6_double_integrator",
    "fig6a_pentagon_di",
    "fig6b_square_di",
];

pub fn shipped_source(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load_shipped(name: &str) -> CliResult<ScenarioConfig> {
    let src = shipped_source(name)
        .ok_or_else(|| CliError::Config(format!("no shipped scenario named `{name}`")))?;
    parse_scenario(src)
}

/// Loads a file if `spec` is an existing path, otherwise a shipped scenario by name.
pub fn resolve(spec: &str) -> CliResult<ScenarioConfig> {
    if Path::new(spec).exists() {
        load_scenario(spec)
    } else if shipped_source(spec).is_some() {
        load_shipped(spec)
    } else {
        Err(CliError::Config(format!(
            "`{spec}` is neither a readable file nor a shipped scenario (see list-scenarios)"
        )))
    }
}
