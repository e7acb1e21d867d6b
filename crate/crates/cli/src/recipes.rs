// SPDX-License-Identifier: Apache-2.0

//! Figure-reproduction configs compiled into the binary.

use crate::config::ExperimentConfig;

pub const RECIPES: [(&str, &str); 7] = [
    ("fig2", include_str!("../recipes/fig2.toml")),
    ("fig3", include_str!("../recipes/fig3.toml")),
    ("fig4", include_str!("../recipes/fig4.toml")),
    ("fig5", include_str!("../recipes/fig5.toml")),
    ("fig6", include_str!("../recipes/fig6.toml")),
    ("meanfield", include_str!("../recipes/meanfield.toml")),
    ("spectra-feedback", include_str!("../recipes/spectra-feedback.toml")),
];

/// Source text of a bundled recipe; `name` may carry a `.toml` suffix.
pub fn find(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".toml").unwrap_or(name);
    RECIPES.iter().find(|r| r.0 == stem).map(|r| r.1)
}

pub fn all() -> Vec<(&'static str, ExperimentConfig)> {
    RECIPES
        .iter()
        .map(|(n, text)| {
            let cfg = ExperimentConfig::from_toml(text)
                .unwrap_or_else(|e| panic!("bundled recipe {n} is invalid: {e}"));
            (*n, cfg)
        })
        .collect()
}
