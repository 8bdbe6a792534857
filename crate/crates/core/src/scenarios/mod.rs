//! Worked scenarios: exponential decay, the EPR pair (also seen from a
//! boosted frame) and two independent nuclei.
//!
//! Every run is a pure function of its configuration and seed.

mod config;
mod grounding;
mod stats;
mod trace;

pub use config::*;
pub use grounding::{ground_free_flight, FreeFlight};
pub use stats::*;
pub use trace::*;

use crate::conic_wave::WaveError;
use crate::geometry::{ConicClock, Event, GeometryError, Worldline};
use crate::qrule::{
    revive, ComponentId, ComponentSpec, Factor, HitSchedule, InteractionWindow, PendingInteraction,
    ProductEquation, QRuleEquation, QRuleError, Spin, TrackedWorldline, WindowShape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    QRule(#[from] QRuleError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error("trace violates invariants: {0}")]
    Invariant(String),
}

impl ScenarioError {
    pub fn is_causal_violation(&self) -> bool {
        matches!(
            self,
            ScenarioError::Geometry(GeometryError::CausalViolation { .. })
                | ScenarioError::QRule(QRuleError::Geometry(GeometryError::CausalViolation { .. }))
        )
    }
}

/// Uniform draws for one run. Every run consumes exactly four numbers
/// `(u₁, v₁, u₂, v₂)` so seeds map to runs the same way across scenarios.
fn draws(seed: u64) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| rng.gen::<f64>())
}

fn tracked(trace: &RunTrace) -> Vec<TrackedWorldline> {
    trace
        .worldlines
        .iter()
        .filter(|w| matches!(w.role, Role::Particle | Role::Source))
        .map(|w| TrackedWorldline { name: w.name.clone(), worldline: w.worldline })
        .collect()
}

fn empty_trace(config: &ScenarioConfig, seed: u64) -> RunTrace {
    RunTrace::new(config.scenario.kind(), &config.name, seed)
}

fn worldline(name: &str, role: Role, origin: Event, v: f64) -> Result<TraceWorldline, GeometryError> {
    Ok(TraceWorldline { name: name.to_string(), role, worldline: Worldline::new(origin, v)? })
}

/// Runs the configured scenario once with `seed`.
pub fn run(config: &ScenarioConfig, seed: u64) -> Result<RunTrace, ScenarioError> {
    config.validate()?;
    match &config.scenario {
        Scenario::Decay(d) => run_decay(config, d, seed),
        Scenario::Epr(e) | Scenario::EprBoosted(e) => run_epr(config, e, seed),
        Scenario::Independent(i) => run_independent(config, i, seed),
    }
}

/// Runs an `epr_boosted` (or `epr` with a boost) scenario and replays it in
/// the observer's frame.
pub fn run_boosted(config: &ScenarioConfig, seed: u64) -> Result<(RunTrace, BoostedView), ScenarioError> {
    let velocity = match &config.scenario {
        Scenario::Epr(e) | Scenario::EprBoosted(e) => e.boost,
        _ => None,
    }
    .ok_or_else(|| ConfigError::new("scenario.boost", "boosted replay needs an EPR boost velocity"))?;
    let mut trace = run(config, seed)?;
    let view = BoostedView::of(&trace, velocity)?;
    trace.annotations.insert("boost.velocity".into(), format!("{velocity}"));
    trace.annotations.insert("boost.lorentz_order".into(), view.lorentz_order.join(","));
    trace.annotations.insert("boost.conic_order".into(), view.conic_order.join(","));
    Ok((trace, view))
}

fn run_decay(config: &ScenarioConfig, d: &DecayConfig, seed: u64) -> Result<RunTrace, ScenarioError> {
    let [u, v, ..] = draws(seed);
    let mut trace = empty_trace(config, seed);
    let start = Event::new(d.position, d.start_time);
    trace.worldlines.push(worldline("pc", Role::Source, start, 0.0)?);
    let clock = ConicClock::at_rest(start);

    let mut eq = QRuleEquation::realized(d.start_time, ComponentSpec::new("pc", vec![Factor::plain("pc")]));
    let products = eq.add_ready(ComponentSpec::new(
        "p1 p2",
        vec![Factor::plain("p1"), Factor::plain("p2")],
    ))?;
    let window = InteractionWindow::new(
        ComponentId(0),
        products,
        1.0,
        d.start_time,
        None,
        WindowShape::Exponential { rate: d.rate },
    )?;
    let schedule = HitSchedule::new(vec![window])?;
    trace.windows.push(WindowRecord {
        epoch: 0,
        carrier: "pc".into(),
        target: "p1 p2".into(),
        window,
        region: [start, start],
    });
    trace.timeline.push(eq.snapshot("before decay"));

    let hit = schedule.sample_hit(u, v)?.ok_or(QRuleError::InvalidUniform)?;
    eq.evolve_to(&schedule, hit.time)?;
    trace.timeline.push(eq.snapshot("at hit"));
    let vertex = clock.event_on(&trace.worldlines[0].worldline, hit.time)?;
    let collapse = eq.collapse(hit.target, hit.time, vertex, "0", &trace.frontier, &tracked(&trace))?;
    trace.timeline.push(collapse.equation.snapshot("decayed"));
    trace.worldlines[0].worldline = trace.worldlines[0].worldline.with_end(vertex.t);
    trace.worldlines.push(worldline("p1", Role::Product, vertex, -d.product_speed)?);
    trace.worldlines.push(worldline("p2", Role::Product, vertex, d.product_speed)?);
    trace.reductions.push(collapse.reduction);
    trace.frontier = collapse.frontier;
    trace.outcome.insert("decay_time".into(), format!("{}", hit.time));
    trace.outcome.insert("elapsed".into(), format!("{}", hit.time - d.start_time));
    Ok(trace)
}

const SPIN_ROWS: [(usize, Spin); 4] = [(0, Spin::Up), (1, Spin::Down), (0, Spin::Down), (1, Spin::Up)];

fn subject(i: usize) -> String {
    format!("p{}", i + 1)
}

fn device(i: usize) -> String {
    format!("M{}", i + 1)
}

/// Component in which carrier `i` has engaged its detector with `spin` and
/// its partner carries the opposite spin.
fn engaged_spec(i: usize, spin: Spin) -> ComponentSpec {
    let spins = if i == 0 { [spin, spin.flipped()] } else { [spin.flipped(), spin] };
    let mut factors = Vec::new();
    let mut label = String::new();
    for (k, &s) in spins.iter().enumerate() {
        if k == i {
            factors.push(Factor::engaged(subject(k), s, device(k)));
            label.push_str(&format!("[{}({}) {}]", subject(k), s.as_str(), device(k)));
        } else {
            factors.push(Factor::spin(subject(k), s));
            label.push_str(&format!("{}({})", subject(k), s.as_str()));
        }
        if k == 0 {
            label.push(' ');
        }
    }
    label.push_str(&format!(" ⊗ {}", device(1 - i)));
    ComponentSpec::new(label, factors)
}

fn both_engaged_spec(spins: [Spin; 2]) -> ComponentSpec {
    let factors = (0..2).map(|k| Factor::engaged(subject(k), spins[k], device(k))).collect();
    let label = format!(
        "[p1({}) M1][p2({}) M2]",
        spins[0].as_str(),
        spins[1].as_str()
    );
    ComponentSpec::new(label, factors)
}

fn run_epr(config: &ScenarioConfig, e: &EprConfig, seed: u64) -> Result<RunTrace, ScenarioError> {
    let [u1, v1, u2, v2] = draws(seed);
    let mut trace = empty_trace(config, seed);
    for i in 0..2 {
        trace.worldlines.push(worldline(&subject(i), Role::Particle, e.emission, e.velocities[i])?);
    }
    for i in 0..2 {
        let at = Event::new(e.detectors[i].position, e.emission.t);
        trace.worldlines.push(worldline(&device(i), Role::Device, at, 0.0)?);
    }
    let carriers: [Worldline; 2] = [trace.worldlines[0].worldline, trace.worldlines[1].worldline];
    let segments = [e.segment(0), e.segment(1)];
    let region = |i: usize| [carriers[i].event_at(segments[i].0), carriers[i].event_at(segments[i].1)];
    let shape = e.shape.window_shape();

    let clock0 = ConicClock::at_rest(e.emission);
    let mut eq = QRuleEquation::realized(
        e.emission.t,
        ComponentSpec::new("p1 p2 ⊗ M1 M2", vec![Factor::plain("p1"), Factor::plain("p2")]),
    );
    let mut windows = Vec::new();
    for (row, &(carrier, spin)) in SPIN_ROWS.iter().enumerate() {
        let spec = engaged_spec(carrier, spin);
        let label = spec.label.clone();
        let id = eq.add_ready(spec)?;
        let [enter, exit] = region(carrier);
        let window = InteractionWindow::new(
            ComponentId(0),
            id,
            e.weights[row],
            clock0.conic_time(enter),
            Some(clock0.conic_time(exit)),
            shape,
        )?;
        trace.windows.push(WindowRecord {
            epoch: 0,
            carrier: subject(carrier),
            target: label,
            window,
            region: [enter, exit],
        });
        windows.push(window);
    }
    let schedule = HitSchedule::new(windows)?;
    trace.timeline.push(eq.snapshot("before measurement"));

    let hit = schedule.sample_hit(u1, v1)?.ok_or(QRuleError::InvalidUniform)?;
    let (first, first_spin) = SPIN_ROWS[hit.window];
    let partner = 1 - first;
    eq.evolve_to(&schedule, hit.time)?;
    trace.timeline.push(eq.snapshot("at first hit"));
    let a = clock0.event_on(&carriers[first], hit.time)?;
    let collapse = eq.collapse(hit.target, hit.time, a, "A", &trace.frontier, &tracked(&trace))?;
    trace.timeline.push(collapse.equation.snapshot("after first reduction"));
    let mut eq = collapse.equation;
    trace.frontier = collapse.frontier;
    trace.reductions.push(collapse.reduction);

    let mut spins = [first_spin; 2];
    spins[partner] = first_spin.flipped();
    let final_spec = both_engaged_spec(spins);
    let final_label = final_spec.label.clone();
    let final_id = eq.add_ready(final_spec)?;
    trace.timeline.push(eq.snapshot("partner measurement pending"));

    let clock1 = ConicClock::new(a, hit.time);
    let [enter, exit] = region(partner);
    let partner_row = SPIN_ROWS
        .iter()
        .position(|&(c, s)| c == partner && s == spins[partner])
        .expect("every carrier and spin has a row");
    let pending = PendingInteraction {
        carrier: subject(partner),
        target: final_id,
        weight: e.weights[partner_row],
        t_on: clock1.conic_time(enter),
        t_off: Some(clock1.conic_time(exit)),
        shape,
    };
    let schedule = revive(&eq, &trace.reductions[0], &[pending])?;
    let revived = schedule.windows[0];
    trace.revivals.push(Revival {
        after: "A".into(),
        carrier: subject(partner),
        weight: revived.weight,
        t_on: revived.t_on,
    });
    trace.windows.push(WindowRecord {
        epoch: 1,
        carrier: subject(partner),
        target: final_label,
        window: revived,
        region: [enter, exit],
    });

    let hit2 = schedule.sample_hit(u2, v2)?.ok_or(QRuleError::InvalidUniform)?;
    eq.evolve_to(&schedule, hit2.time)?;
    trace.timeline.push(eq.snapshot("at second hit"));
    let b = clock1.event_on(&carriers[partner], hit2.time)?;
    let collapse = eq.collapse(hit2.target, hit2.time, b, "B", &trace.frontier, &tracked(&trace))?;
    trace.timeline.push(collapse.equation.snapshot("after second reduction"));
    trace.frontier = collapse.frontier;
    trace.reductions.push(collapse.reduction);

    for (i, s) in spins.iter().enumerate() {
        trace.outcome.insert(subject(i), s.as_str().to_string());
    }
    trace.outcome.insert("first".into(), subject(first));
    trace.annotations.insert(
        "devices".into(),
        "detector world lines are static at their configured positions".into(),
    );
    if let Some(c) = trace.reductions[0].cutoffs.iter().find(|c| c.worldline == subject(partner)) {
        trace.annotations.insert(
            "repetition".into(),
            format!(
                "{} keeps moving past the cutoff at t = {:.6}; its free flight lies in ready components only",
                subject(partner),
                c.event.t
            ),
        );
    }
    Ok(trace)
}

fn run_independent(
    config: &ScenarioConfig,
    ind: &IndependentConfig,
    seed: u64,
) -> Result<RunTrace, ScenarioError> {
    let [u1, v1, u2, v2] = draws(seed);
    let uniforms = [(u1, v1), (u2, v2)];
    let mut trace = empty_trace(config, seed);
    let mut factors = Vec::new();
    let mut schedules = Vec::new();
    let mut clocks = Vec::new();
    for (k, n) in ind.nuclei.iter().enumerate() {
        let name = format!("n{}", k + 1);
        let start = Event::new(n.position, ind.start_time);
        trace.worldlines.push(worldline(&name, Role::Source, start, 0.0)?);
        clocks.push(ConicClock::at_rest(start));
        let mut eq = QRuleEquation::realized(ind.start_time, ComponentSpec::new(&name, vec![Factor::plain(&name)]));
        let p = format!("p{}", k + 1);
        let label = format!("{p}{p}'");
        let target = eq.add_ready(ComponentSpec::new(
            &label,
            vec![Factor::plain(&p), Factor::plain(format!("{p}'"))],
        ))?;
        let window = InteractionWindow::new(
            ComponentId(0),
            target,
            1.0,
            ind.start_time,
            None,
            WindowShape::Exponential { rate: n.rate },
        )?;
        trace.windows.push(WindowRecord { epoch: 0, carrier: name, target: label, window, region: [start, start] });
        schedules.push(HitSchedule::new(vec![window])?);
        factors.push(eq);
    }
    let mut product = ProductEquation::new(factors);
    trace.timeline.push(product.expand().snapshot("before decays"));

    let hits = [0, 1]
        .map(|k| schedules[k].sample_hit(uniforms[k].0, uniforms[k].1))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let hits: Vec<_> = hits.into_iter().map(|h| h.ok_or(QRuleError::InvalidUniform)).collect::<Result<_, _>>()?;
    let order: [usize; 2] = if hits[1].time < hits[0].time { [1, 0] } else { [0, 1] };
    if hits[0].time == hits[1].time {
        trace.annotations.insert("tie".into(), "equal hit times; n1 decays first".into());
    }

    let mut decayed = [false; 2];
    for (step, &k) in order.iter().enumerate() {
        let t = hits[k].time;
        for j in (0..2).filter(|&j| !decayed[j]) {
            product.evolve_factor(j, &schedules[j], t)?;
        }
        decayed[k] = true;
        let stage = if step == 0 { "at first decay" } else { "at second decay" };
        trace.timeline.push(product.expand().snapshot(stage));
        let vertex = clocks[k].event_on(&trace.worldlines[k].worldline, t)?;
        let label = if step == 0 { "A" } else { "B" };
        let (next, reduction, frontier) =
            product.collapse_factor(k, hits[k].target, t, vertex, label, &trace.frontier, &tracked(&trace))?;
        product = next;
        trace.frontier = frontier;
        trace.reductions.push(reduction);
        let stage = if step == 0 { "after first decay" } else { "after second decay" };
        trace.timeline.push(product.expand().snapshot(stage));
        trace.outcome.insert(format!("n{}", k + 1), format!("{t}"));
    }
    for k in 0..2 {
        let vertex = trace.reductions.iter().find(|r| r.vertex.x == ind.nuclei[k].position).map(|r| r.vertex);
        if let Some(vertex) = vertex {
            trace.worldlines[k].worldline = trace.worldlines[k].worldline.with_end(vertex.t);
            let p = format!("p{}", k + 1);
            trace.worldlines.push(worldline(&p, Role::Product, vertex, -ind.product_speed)?);
            trace.worldlines.push(worldline(&format!("{p}'"), Role::Product, vertex, ind.product_speed)?);
        }
    }
    trace.outcome.insert("first".into(), format!("n{}", order[0] + 1));
    Ok(trace)
}
