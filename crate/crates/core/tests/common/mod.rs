#![allow(dead_code)]

use conic_collapse::diagram::{render_boosted, DiagramSpec};
use conic_collapse::scenarios::{builtin, run, Scenario, ScenarioConfig};
use std::path::PathBuf;

pub const GOLDEN_NAMES: [&str; 4] = ["fig1_epr", "fig5_boosted", "fig8_independent", "decay"];

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.svg"))
}

pub fn boost_of(config: &ScenarioConfig) -> f64 {
    match &config.scenario {
        Scenario::EprBoosted(e) => e.boost.unwrap_or(0.0),
        _ => 0.0,
    }
}

/// SVG for a built-in config at its own seed, in its own frame.
pub fn render_builtin(name: &str) -> String {
    let config = builtin(name).unwrap();
    let trace = run(&config, config.seed).unwrap();
    let v = boost_of(&config);
    let spec = DiagramSpec::fit(&trace, v).unwrap();
    render_boosted(&trace, v, &spec).unwrap()
}

/// Compares against the checked-in golden, rewriting it when
/// `UPDATE_GOLDENS` is set.
pub fn matches_golden(name: &str) -> Result<(), String> {
    let svg = render_builtin(name);
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::write(&path, &svg).map_err(|e| e.to_string())?;
    }
    let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if golden == svg {
        Ok(())
    } else {
        Err(format!("{name} differs from {}", path.display()))
    }
}
