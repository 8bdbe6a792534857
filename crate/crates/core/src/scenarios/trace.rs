//! Run traces and the invariants every trace must satisfy.

use crate::geometry::{boost, cone_time, on_cone, Event, Frontier, GeometryError, Worldline};
use crate::qrule::{EquationSnapshot, InteractionWindow, ReductionEvent, CONSERVATION_TOL};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TRACE_SCHEMA_VERSION: u32 = 1;
/// Tolerance for the frontier non-penetration check.
pub const PENETRATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Carrier tracked for cutoffs.
    Particle,
    Device,
    Source,
    /// Decay product, drawn but not tracked.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceWorldline {
    pub name: String,
    pub role: Role,
    pub worldline: Worldline,
}

/// An interaction window together with the stretch of its carrier's world
/// line over which the interaction happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub epoch: usize,
    pub carrier: String,
    pub target: String,
    pub window: InteractionWindow,
    pub region: [Event; 2],
}

/// A carrier's measurement restarted after a reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revival {
    pub after: String,
    pub carrier: String,
    /// Window weight after renormalization.
    pub weight: f64,
    pub t_on: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub schema_version: u32,
    pub scenario: String,
    pub name: String,
    pub seed: u64,
    pub worldlines: Vec<TraceWorldline>,
    pub windows: Vec<WindowRecord>,
    pub reductions: Vec<ReductionEvent>,
    #[serde(default)]
    pub revivals: Vec<Revival>,
    pub timeline: Vec<EquationSnapshot>,
    pub frontier: Frontier,
    pub outcome: BTreeMap<String, String>,
    #[serde(default)]
    pub annotations: BTreeMap<String, String>,
}

impl RunTrace {
    /// Trace with no events.
    pub fn new(scenario: impl Into<String>, name: impl Into<String>, seed: u64) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            scenario: scenario.into(),
            name: name.into(),
            seed,
            worldlines: Vec::new(),
            windows: Vec::new(),
            reductions: Vec::new(),
            revivals: Vec::new(),
            timeline: Vec::new(),
            frontier: Frontier::new(),
            outcome: BTreeMap::new(),
            annotations: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn worldline(&self, name: &str) -> Option<&TraceWorldline> {
        self.worldlines.iter().find(|w| w.name == name)
    }

    pub fn reduction(&self, label: &str) -> Option<&ReductionEvent> {
        self.reductions.iter().find(|r| r.label == label)
    }

    /// Reduction labels in conic-time order.
    pub fn conic_order(&self) -> Vec<String> {
        let mut r: Vec<&ReductionEvent> = self.reductions.iter().collect();
        r.sort_by(|a, b| a.conic_time.total_cmp(&b.conic_time));
        r.into_iter().map(|r| r.label.clone()).collect()
    }
}

/// A reduction seen by a boosted observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedReduction {
    pub label: String,
    pub vertex: Event,
    pub conic_time: f64,
    pub cutoffs: Vec<(String, Event)>,
}

/// Lorentz-frame replay of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedView {
    pub velocity: f64,
    pub worldlines: Vec<TraceWorldline>,
    pub reductions: Vec<BoostedReduction>,
    /// Labels sorted by boosted coordinate time.
    pub lorentz_order: Vec<String>,
    /// Labels sorted by conic time (frame independent).
    pub conic_order: Vec<String>,
    pub lorentz_reverses_conic: bool,
}

impl BoostedView {
    pub fn of(trace: &RunTrace, velocity: f64) -> Result<Self, GeometryError> {
        let worldlines = trace
            .worldlines
            .iter()
            .map(|w| {
                Ok(TraceWorldline {
                    name: w.name.clone(),
                    role: w.role,
                    worldline: w.worldline.boosted(velocity)?,
                })
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;
        let reductions = trace
            .reductions
            .iter()
            .map(|r| {
                Ok(BoostedReduction {
                    label: r.label.clone(),
                    vertex: boost(r.vertex, velocity)?,
                    conic_time: r.conic_time,
                    cutoffs: r
                        .cutoffs
                        .iter()
                        .map(|c| Ok((c.worldline.clone(), boost(c.event, velocity)?)))
                        .collect::<Result<_, GeometryError>>()?,
                })
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;
        let mut by_time: Vec<&BoostedReduction> = reductions.iter().collect();
        by_time.sort_by(|a, b| a.vertex.t.total_cmp(&b.vertex.t));
        let lorentz_order: Vec<String> = by_time.iter().map(|r| r.label.clone()).collect();
        let conic_order = trace.conic_order();
        let lorentz_reverses_conic = lorentz_order != conic_order;
        Ok(Self { velocity, worldlines, reductions, lorentz_order, conic_order, lorentz_reverses_conic })
    }
}

/// Checks every structural invariant of a trace; returns the violations.
pub fn check_trace(trace: &RunTrace) -> Vec<String> {
    let mut problems = Vec::new();

    for snap in &trace.timeline {
        let sum: f64 = snap.components.iter().map(|c| c.qvalue).sum();
        if (sum - 1.0).abs() > CONSERVATION_TOL || (snap.total - sum).abs() > CONSERVATION_TOL {
            problems.push(format!("stage {}: total qvalue {sum} is not conserved", snap.stage));
        }
        if snap.components.iter().any(|c| c.qvalue < -CONSERVATION_TOL) {
            problems.push(format!("stage {}: negative qvalue", snap.stage));
        }
    }
    for pair in trace.timeline.windows(2) {
        if pair[1].conic_time < pair[0].conic_time {
            problems.push(format!("stage {} runs backwards in conic time", pair[1].stage));
        }
    }

    for pair in trace.reductions.windows(2) {
        if pair[1].conic_time < pair[0].conic_time {
            problems.push(format!("reduction {} precedes {} in conic time", pair[1].label, pair[0].label));
        }
    }

    for r in &trace.reductions {
        for c in &r.cutoffs {
            if !on_cone(r.vertex, c.event) {
                problems.push(format!("cutoff of {} by {} is off the cone", c.worldline, r.label));
            }
            if let Some(w) = trace.worldline(&c.worldline) {
                let x = w.worldline.position_at(c.event.t);
                if (x - c.event.x).abs() > 1e-9 {
                    problems.push(format!("cutoff of {} is off its world line", c.worldline));
                }
            } else {
                problems.push(format!("cutoff names unknown world line {}", c.worldline));
            }
        }
    }

    for rv in &trace.revivals {
        match trace.reduction(&rv.after) {
            Some(r) if rv.t_on + CONSERVATION_TOL < r.conic_time => {
                problems.push(format!("revival of {} starts before reduction {}", rv.carrier, r.label))
            }
            None => problems.push(format!("revival follows unknown reduction {}", rv.after)),
            _ => {}
        }
    }

    // each vertex must lie on or above the frontier built from its predecessors
    let mut replay = Frontier::new();
    for r in &trace.reductions {
        if let Some(f) = replay.eval(r.vertex.x) {
            if r.vertex.t < f - PENETRATION_TOL {
                problems.push(format!("vertex {} lies below the prior frontier", r.label));
            }
        }
        match replay.insert(r.vertex) {
            Ok((_, next)) => replay = next,
            Err(e) => {
                problems.push(format!("vertex {}: {e}", r.label));
                return problems;
            }
        }
    }
    if replay != trace.frontier {
        problems.push("stored frontier differs from the replayed one".into());
    }

    let vertices: Vec<Event> = trace.reductions.iter().map(|r| r.vertex).collect();
    let brute = |x: f64| vertices.iter().map(|v| cone_time(*v, x)).fold(f64::NEG_INFINITY, f64::max);
    let mut probes: Vec<f64> = trace.frontier.breakpoints().iter().map(|b| b.x).collect();
    if let (Some(lo), Some(hi)) = (probes.first().copied(), probes.last().copied()) {
        let span = (hi - lo).max(1.0);
        probes.extend((0..=64).map(|i| lo - span + 3.0 * span * i as f64 / 64.0));
    }
    for x in probes {
        if let Some(f) = trace.frontier.eval(x) {
            if (f - brute(x)).abs() > 1e-12 * (1.0 + f.abs()) {
                problems.push(format!("frontier at x = {x} differs from the cone envelope"));
            }
        }
    }
    for r in &trace.reductions {
        for p in r.clipped.polyline(-1e3, 1e3) {
            if let Some(f) = trace.frontier.eval(p.x) {
                if p.t > f + PENETRATION_TOL {
                    problems.push(format!("cone {} pokes above the frontier", r.label));
                }
            }
        }
    }

    if trace.scenario == "epr" || trace.scenario == "epr_boosted" {
        if trace.reductions.len() != 2 {
            problems.push(format!("expected 2 reductions, found {}", trace.reductions.len()));
        }
        for rv in &trace.revivals {
            if (rv.weight - 1.0).abs() > CONSERVATION_TOL {
                problems.push(format!("revived window for {} carries weight {}", rv.carrier, rv.weight));
            }
        }
    }
    problems
}
