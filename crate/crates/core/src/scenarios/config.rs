//! Scenario configuration documents (`schema_version` 1).

use crate::geometry::{check_velocity, Event};
use crate::qrule::WindowShape;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const SCHEMA_VERSION: u32 = 1;

/// A validation failure naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub scenario: Scenario,
    #[serde(default)]
    pub grid: GridConfig,
}

fn default_runs() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Decay(DecayConfig),
    Epr(EprConfig),
    EprBoosted(EprConfig),
    Independent(IndependentConfig),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Decay(_) => "decay",
            Scenario::Epr(_) => "epr",
            Scenario::EprBoosted(_) => "epr_boosted",
            Scenario::Independent(_) => "independent",
        }
    }
}

/// A composite particle at rest decaying into a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub rate: f64,
    /// Conic time at which the decay channel opens.
    #[serde(default)]
    pub start_time: f64,
    #[serde(default)]
    pub position: f64,
    #[serde(default = "default_product_speed")]
    pub product_speed: f64,
}

fn default_product_speed() -> f64 {
    0.5
}

/// Static detector occupying `[position - width/2, position + width/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detector {
    pub position: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Constant,
    RaisedCosine,
}

impl ShapeName {
    pub fn window_shape(self) -> WindowShape {
        match self {
            ShapeName::Constant => WindowShape::Constant,
            ShapeName::RaisedCosine => WindowShape::RaisedCosine,
        }
    }
}

/// Singlet pair measured by two static spin detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EprConfig {
    #[serde(default = "origin")]
    pub emission: Event,
    /// Velocities of p1 and p2.
    #[serde(default = "default_velocities")]
    pub velocities: [f64; 2],
    /// Detectors M1 (for p1) and M2 (for p2).
    pub detectors: [Detector; 2],
    #[serde(default = "default_shape")]
    pub shape: ShapeName,
    /// Branch weights for the rows p1↑·M1, p2↓·M2, p1↓·M1, p2↑·M2.
    #[serde(default = "singlet_weights")]
    pub weights: [f64; 4],
    /// Observer velocity for the boosted replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boost: Option<f64>,
}

fn origin() -> Event {
    Event::new(0.0, 0.0)
}

fn default_velocities() -> [f64; 2] {
    [-0.5, 0.5]
}

fn default_shape() -> ShapeName {
    ShapeName::RaisedCosine
}

/// |2^(-1/2)|² per spin branch, split evenly over which detector fires first.
pub fn singlet_weights() -> [f64; 4] {
    [0.5 * 0.5; 4]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nucleus {
    pub position: f64,
    pub rate: f64,
}

/// Two independent unstable nuclei.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndependentConfig {
    pub nuclei: [Nucleus; 2],
    #[serde(default)]
    pub start_time: f64,
    #[serde(default = "default_product_speed")]
    pub product_speed: f64,
}

/// Grid used to check free flight of the carriers' conic waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "one")]
    pub sigma0: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn default_spacing() -> f64 {
    0.05
}

fn one() -> f64 {
    1.0
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { spacing: default_spacing(), sigma0: 1.0, mass: 1.0, hbar: 1.0 }
    }
}

fn positive(field: &str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be a positive finite number, got {value}")))
    }
}

fn finite(field: &str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be finite"))
    }
}

fn subluminal(field: &str, value: f64) -> Result<(), ConfigError> {
    check_velocity(value)
        .map_err(|_| ConfigError::new(field, format!("|v| = {} must be < 1", value.abs())))
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError::new("config", format!("invalid document: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(ConfigError::new("name", "must not be empty"));
        }
        if self.runs == 0 {
            return Err(ConfigError::new("runs", "must be at least 1"));
        }
        let g = &self.grid;
        positive("grid.spacing", g.spacing)?;
        positive("grid.sigma0", g.sigma0)?;
        positive("grid.mass", g.mass)?;
        positive("grid.hbar", g.hbar)?;
        match &self.scenario {
            Scenario::Decay(d) => d.validate(),
            Scenario::Epr(e) => e.validate(false),
            Scenario::EprBoosted(e) => e.validate(true),
            Scenario::Independent(i) => i.validate(),
        }
    }
}

impl DecayConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        positive("scenario.rate", self.rate)?;
        finite("scenario.start_time", self.start_time)?;
        finite("scenario.position", self.position)?;
        subluminal("scenario.product_speed", self.product_speed)
    }
}

impl EprConfig {
    /// Coordinate times at which carrier `i` enters and leaves its detector.
    pub fn segment(&self, i: usize) -> (f64, f64) {
        let v = self.velocities[i];
        let d = self.detectors[i];
        let near = d.position - v.signum() * d.width / 2.0;
        let far = d.position + v.signum() * d.width / 2.0;
        let at = |x: f64| self.emission.t + (x - self.emission.x) / v;
        (at(near), at(far))
    }

    fn validate(&self, boosted: bool) -> Result<(), ConfigError> {
        finite("scenario.emission.x", self.emission.x)?;
        finite("scenario.emission.t", self.emission.t)?;
        for i in 0..2 {
            let field = format!("scenario.velocities[{i}]");
            subluminal(&field, self.velocities[i])?;
            if self.velocities[i] == 0.0 {
                return Err(ConfigError::new(field, "carrier must move to reach its detector"));
            }
            let d = self.detectors[i];
            finite(&format!("scenario.detectors[{i}].position"), d.position)?;
            positive(&format!("scenario.detectors[{i}].width"), d.width)?;
            let (enter, _) = self.segment(i);
            if enter.is_nan() || enter <= self.emission.t {
                return Err(ConfigError::new(
                    format!("scenario.detectors[{i}].position"),
                    "detector must lie ahead of its carrier, clear of the emission point",
                ));
            }
        }
        for (i, w) in self.weights.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0 && *w <= 1.0) {
                return Err(ConfigError::new(format!("scenario.weights[{i}]"), "must lie in (0, 1]"));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ConfigError::new(
                "scenario.weights",
                format!("must sum to the measured pair's probability mass 1, got {total}"),
            ));
        }
        match (self.boost, boosted) {
            (Some(v), _) => subluminal("scenario.boost", v)?,
            (None, true) => return Err(ConfigError::new("scenario.boost", "required for epr_boosted")),
            (None, false) => {}
        }
        // a partner cut by the first reduction must still have its detector ahead
        for first in 0..2 {
            let partner = 1 - first;
            let (_, partner_exit) = self.segment(partner);
            let (enter, exit) = self.segment(first);
            for s in [enter, exit] {
                let v = self.velocities[first];
                let vertex = Event::new(self.emission.x + v * (s - self.emission.t), s);
                let vp = self.velocities[partner];
                let w = crate::geometry::Worldline::new(self.emission, vp)
                    .map_err(|e| ConfigError::new("scenario.velocities", e.to_string()))?;
                if let Ok(cut) = crate::geometry::cone_intersect_worldline(vertex, &w) {
                    if cut.t >= partner_exit {
                        return Err(ConfigError::new(
                            format!("scenario.detectors[{partner}]"),
                            "partner would pass its detector before any reduction cone reaches it",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

impl IndependentConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        for (i, n) in self.nuclei.iter().enumerate() {
            finite(&format!("scenario.nuclei[{i}].position"), n.position)?;
            positive(&format!("scenario.nuclei[{i}].rate"), n.rate)?;
        }
        if self.nuclei[0].position == self.nuclei[1].position {
            return Err(ConfigError::new("scenario.nuclei", "nuclei must be spatially separated"));
        }
        finite("scenario.start_time", self.start_time)?;
        subluminal("scenario.product_speed", self.product_speed)
    }
}

/// Names of the built-in configurations.
pub const BUILTIN_NAMES: [&str; 4] = ["fig1_epr", "fig5_boosted", "fig8_independent", "decay"];

fn epr_defaults(boost: Option<f64>) -> EprConfig {
    EprConfig {
        emission: origin(),
        velocities: default_velocities(),
        detectors: [
            Detector { position: -2.0, width: 0.5 },
            Detector { position: 2.0, width: 0.5 },
        ],
        shape: ShapeName::RaisedCosine,
        weights: singlet_weights(),
        boost,
    }
}

/// Built-in configurations reproducing each worked scenario.
pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    let (scenario, seed) = match name {
        "fig1_epr" => (Scenario::Epr(epr_defaults(None)), 1),
        "fig5_boosted" => (Scenario::EprBoosted(epr_defaults(Some(0.5))), 1),
        "fig8_independent" => (
            Scenario::Independent(IndependentConfig {
                nuclei: [Nucleus { position: -2.0, rate: 0.5 }, Nucleus { position: 2.0, rate: 0.5 }],
                start_time: 0.0,
                product_speed: 0.5,
            }),
            3,
        ),
        "decay" => (
            Scenario::Decay(DecayConfig {
                rate: 1.0,
                start_time: 0.0,
                position: 0.0,
                product_speed: 0.5,
            }),
            1,
        ),
        _ => return None,
    };
    Some(ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed,
        runs: default_runs(),
        scenario,
        grid: GridConfig::default(),
    })
}
