//! Scenarios compiled into the binary.

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::CliError;

const BUNDLED: &[(&str, &str)] = &[
    ("rwa_validity", include_str!("../scenarios/rwa_validity.toml")),
    ("closed_forms", include_str!("../scenarios/closed_forms.toml")),
    ("permutation_optimality", include_str!("../scenarios/permutation_optimality.toml")),
    ("sensitivity_scaling", include_str!("../scenarios/sensitivity_scaling.toml")),
    ("crlb_saturation", include_str!("../scenarios/crlb_saturation.toml")),
    ("offset_resolution", include_str!("../scenarios/offset_resolution.toml")),
    ("raman_three_level", include_str!("../scenarios/raman_three_level.toml")),
    ("error_models", include_str!("../scenarios/error_models.toml")),
    ("fiber_refinement", include_str!("../scenarios/fiber_refinement.toml")),
    ("visibility_budget", include_str!("../scenarios/visibility_budget.toml")),
    ("weak_protocols", include_str!("../scenarios/weak_protocols.toml")),
    ("protocol_2b", include_str!("../scenarios/protocol_2b.toml")),
];

#[derive(Clone, Debug, Serialize)]
pub struct Listing {
    pub name: &'static str,
    pub command: &'static str,
    pub tags: Vec<String>,
    pub description: String,
}

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Bundled scenarios, optionally only those carrying `tag`.
pub fn list(tag: Option<&str>) -> Result<Vec<Listing>, CliError> {
    let mut out = Vec::new();
    for (name, text) in BUNDLED {
        let cfg = ScenarioConfig::parse(text).map_err(|e| CliError::Schema(format!("bundled {name}: {e}")))?;
        if tag.is_some_and(|t| !cfg.tags.iter().any(|c| c == t)) {
            continue;
        }
        out.push(Listing {
            name,
            command: cfg.task()?.command(),
            tags: cfg.tags.clone(),
            description: cfg.description.clone(),
        });
    }
    Ok(out)
}
