//! qRule equations: realized and ready components, probability current
//! flowing through interaction windows, stochastic hits, and collapse.
//!
//! A collapsed equation is consumed: every later write to it fails with
//! [`QRuleError::Consumed`]. The successor equation is the only live state.

use crate::geometry::{
    cone_intersect_worldline, ClippedCone, Event, Frontier, GeometryError, Worldline,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Tolerance on Σ qvalue = 1.
pub const CONSERVATION_TOL: f64 = 1e-9;
/// Bisection tolerance for inverting the cumulative current.
pub const INVERSION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QRuleError {
    #[error("channel '{0}' is already present")]
    DuplicateChannel(String),
    #[error("component {0:?} does not exist in this equation")]
    UnknownComponent(ComponentId),
    #[error("component {0:?} is not ready; only ready components can be hit")]
    NotReady(ComponentId),
    #[error("component '{label}' would be drained to {value:e}")]
    NegativeQvalue { label: String, value: f64 },
    #[error("equation was consumed by a collapse and can no longer change")]
    Consumed,
    #[error("invalid interaction window: {0}")]
    InvalidWindow(String),
    #[error("uniform variates must lie in [0, 1)")]
    InvalidUniform,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ready,
    Realized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Spin::Up => "up",
            Spin::Down => "down",
        }
    }
}

/// One factor of a component: a particle or system, optionally with a spin
/// value and the device it is engaged with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin: Option<Spin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    /// Bracketed with its device, i.e. inside a measurement interaction.
    #[serde(default)]
    pub engaged: bool,
}

impl Factor {
    pub fn plain(subject: impl Into<String>) -> Self {
        Self { subject: subject.into(), spin: None, device: None, engaged: false }
    }

    pub fn spin(subject: impl Into<String>, spin: Spin) -> Self {
        Self { subject: subject.into(), spin: Some(spin), device: None, engaged: false }
    }

    pub fn engaged(subject: impl Into<String>, spin: Spin, device: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            spin: Some(spin),
            device: Some(device.into()),
            engaged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub label: String,
    pub factors: Vec<Factor>,
}

impl ComponentSpec {
    pub fn new(label: impl Into<String>, factors: Vec<Factor>) -> Self {
        Self { label: label.into(), factors }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    pub label: String,
    pub factors: Vec<Factor>,
    pub status: Status,
    pub qvalue: f64,
}

impl Component {
    /// Spin recorded for `subject`, if any factor carries one.
    pub fn spin_of(&self, subject: &str) -> Option<Spin> {
        self.factors.iter().find(|f| f.subject == subject).and_then(|f| f.spin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowShape {
    Constant,
    RaisedCosine,
    /// J(t) = w·λ·e^{-λ(t - t_on)}, open-ended.
    Exponential { rate: f64 },
}

/// Channel of probability current from a realized source to a ready target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionWindow {
    pub source: ComponentId,
    pub target: ComponentId,
    pub weight: f64,
    pub t_on: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_off: Option<f64>,
    pub shape: WindowShape,
}

impl InteractionWindow {
    pub fn new(
        source: ComponentId,
        target: ComponentId,
        weight: f64,
        t_on: f64,
        t_off: Option<f64>,
        shape: WindowShape,
    ) -> Result<Self, QRuleError> {
        let window = Self { source, target, weight, t_on, t_off, shape };
        window.validate()?;
        Ok(window)
    }

    pub fn validate(&self) -> Result<(), QRuleError> {
        if !(self.weight > 0.0 && self.weight <= 1.0) {
            return Err(QRuleError::InvalidWindow(format!("weight {} outside (0, 1]", self.weight)));
        }
        if !self.t_on.is_finite() {
            return Err(QRuleError::InvalidWindow("t_on must be finite".into()));
        }
        match (self.shape, self.t_off) {
            (WindowShape::Exponential { rate }, None) => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(QRuleError::InvalidWindow(format!("decay rate {rate} must be positive")));
                }
            }
            (WindowShape::Exponential { .. }, Some(_)) => {
                return Err(QRuleError::InvalidWindow("exponential windows are open-ended".into()));
            }
            (_, Some(t_off)) if t_off.is_finite() && t_off > self.t_on => {}
            _ => {
                return Err(QRuleError::InvalidWindow(
                    "bounded windows need a finite t_off > t_on".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn end(&self) -> f64 {
        self.t_off.unwrap_or(f64::INFINITY)
    }

    /// Probability current J(t).
    pub fn current(&self, t: f64) -> f64 {
        if t < self.t_on || t > self.end() {
            return 0.0;
        }
        match self.shape {
            WindowShape::Constant => self.weight / (self.end() - self.t_on),
            WindowShape::RaisedCosine => {
                let span = self.end() - self.t_on;
                let u = (t - self.t_on) / span;
                self.weight / span * (1.0 - (2.0 * PI * u).cos())
            }
            WindowShape::Exponential { rate } => {
                self.weight * rate * (-rate * (t - self.t_on)).exp()
            }
        }
    }

    /// ∫ J from t_on to t.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= self.t_on {
            return 0.0;
        }
        match self.shape {
            WindowShape::Constant => {
                let u = ((t - self.t_on) / (self.end() - self.t_on)).min(1.0);
                self.weight * u
            }
            WindowShape::RaisedCosine => {
                let u = (t - self.t_on) / (self.end() - self.t_on);
                if u >= 1.0 {
                    self.weight
                } else {
                    self.weight * (u - (2.0 * PI * u).sin() / (2.0 * PI))
                }
            }
            WindowShape::Exponential { rate } => self.weight * -(-rate * (t - self.t_on)).exp_m1(),
        }
    }
}

/// A sampled stochastic hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub time: f64,
    pub window: usize,
    pub target: ComponentId,
}

/// The windows that can deliver hits, with cumulative total current C(t).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HitSchedule {
    pub windows: Vec<InteractionWindow>,
}

impl HitSchedule {
    pub fn new(windows: Vec<InteractionWindow>) -> Result<Self, QRuleError> {
        for w in &windows {
            w.validate()?;
        }
        let schedule = Self { windows };
        if schedule.total() > 1.0 + CONSERVATION_TOL {
            return Err(QRuleError::InvalidWindow(format!(
                "total committed weight {} exceeds 1",
                schedule.total()
            )));
        }
        Ok(schedule)
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        self.windows.iter().map(|w| w.cumulative(t)).sum()
    }

    pub fn current(&self, t: f64) -> f64 {
        self.windows.iter().map(|w| w.current(t)).sum()
    }

    /// C(∞).
    pub fn total(&self) -> f64 {
        self.windows.iter().map(|w| w.weight).sum()
    }

    pub fn earliest(&self) -> Option<f64> {
        self.windows.iter().map(|w| w.t_on).min_by(|a, b| a.total_cmp(b))
    }

    /// Inverse-CDF hit sampling. `u` picks the time through C⁻¹, `v` picks
    /// the branch from the instantaneous currents at that time. `None` when
    /// the current runs out (`u ≥ C(∞)`).
    pub fn sample_hit(&self, u: f64, v: f64) -> Result<Option<Hit>, QRuleError> {
        if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
            return Err(QRuleError::InvalidUniform);
        }
        if self.windows.is_empty() || u >= self.total() {
            return Ok(None);
        }
        let time = self.invert(u);
        let window = self.pick_branch(time, v);
        Ok(Some(Hit { time, window, target: self.windows[window].target }))
    }

    fn knots(&self) -> Vec<f64> {
        let mut knots: Vec<f64> = self
            .windows
            .iter()
            .flat_map(|w| std::iter::once(w.t_on).chain(w.t_off))
            .collect();
        knots.sort_by(|a, b| a.total_cmp(b));
        knots.dedup();
        knots
    }

    /// Smallest t with C(t) = u on a stretch where current flows.
    fn invert(&self, u: f64) -> f64 {
        let knots = self.knots();
        let mut lo = knots[0];
        let mut c_lo = self.cumulative(lo);
        let mut bounds = knots[1..].iter().copied().chain(std::iter::once(f64::INFINITY));
        let hi = loop {
            let next = bounds.next().expect("u < C(inf) guarantees a bracketing interval");
            let c_next = if next.is_finite() { self.cumulative(next) } else { self.total() };
            if c_next > u {
                break next;
            }
            lo = next;
            c_lo = c_next;
        };
        if u <= c_lo {
            return lo;
        }
        let active: Vec<&InteractionWindow> = self
            .windows
            .iter()
            .filter(|w| w.t_on <= lo && w.end() >= hi)
            .collect();

        // closed forms
        if active.iter().all(|w| w.shape == WindowShape::Constant) {
            let rate: f64 = active.iter().map(|w| w.current(lo)).sum();
            return (lo + (u - c_lo) / rate).min(hi);
        }
        if let [w] = active.as_slice() {
            if let WindowShape::Exponential { rate } = w.shape {
                let base = c_lo - w.cumulative(lo);
                let fraction = (u - base) / w.weight;
                return w.t_on - (-fraction).ln_1p() / rate;
            }
        }

        // bisection fallback
        let mut a = lo;
        let mut b = if hi.is_finite() {
            hi
        } else {
            let mut span = 1.0f64;
            while self.cumulative(lo + span) <= u {
                span *= 2.0;
            }
            lo + span
        };
        while b - a > INVERSION_TOL * (1.0 + a.abs()) {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.cumulative(mid) < u {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    fn pick_branch(&self, t: f64, v: f64) -> usize {
        let mut rates: Vec<f64> = self.windows.iter().map(|w| w.current(t)).collect();
        if rates.iter().sum::<f64>() <= 0.0 {
            // t sits on a raised-cosine onset where every current vanishes;
            // compare the leading-order growth of the windows starting there.
            rates = self
                .windows
                .iter()
                .map(|w| {
                    if (w.t_on - t).abs() > INVERSION_TOL * (1.0 + t.abs()) {
                        return 0.0;
                    }
                    match w.shape {
                        WindowShape::Constant => w.current(w.t_on),
                        WindowShape::RaisedCosine => w.weight / (w.end() - w.t_on).powi(3),
                        WindowShape::Exponential { rate } => w.weight * rate,
                    }
                })
                .collect();
        }
        let total: f64 = rates.iter().sum();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, r) in rates.iter().enumerate() {
            if *r > 0.0 {
                last_positive = i;
                acc += r / total;
                if v < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// A worldline whose intercept with a reduction cone is recorded as a cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedWorldline {
    pub name: String,
    pub worldline: Worldline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub worldline: String,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionEvent {
    pub label: String,
    pub vertex: Event,
    pub component: String,
    pub conic_time: f64,
    pub cutoffs: Vec<Cutoff>,
    /// Tracked worldlines whose cone intercept lies inside an earlier
    /// reduction and is therefore not reached.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shielded: Vec<String>,
    pub clipped: ClippedCone,
}

/// The post-collapse state.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub equation: QRuleEquation,
    pub reduction: ReductionEvent,
    pub frontier: Frontier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSnapshot {
    pub label: String,
    pub status: Status,
    pub qvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationSnapshot {
    pub stage: String,
    pub conic_time: f64,
    pub components: Vec<ComponentSnapshot>,
    pub total: f64,
}

/// A qRule equation in flat form: U(t) = u(t) + u'(t) + ...
#[derive(Debug, Clone, PartialEq)]
pub struct QRuleEquation {
    clock: f64,
    components: Vec<Component>,
    next_id: u32,
    consumed: bool,
}

impl QRuleEquation {
    /// Equation with one realized component carrying all of the qvalue.
    pub fn realized(clock: f64, spec: ComponentSpec) -> Self {
        let component = Component {
            id: ComponentId(0),
            label: spec.label,
            factors: spec.factors,
            status: Status::Realized,
            qvalue: 1.0,
        };
        Self { clock, components: vec![component], next_id: 1, consumed: false }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, id: ComponentId) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn total_qvalue(&self) -> f64 {
        self.components.iter().map(|c| c.qvalue).sum()
    }

    /// The realized component holding the most qvalue.
    pub fn realized_component(&self) -> Option<&Component> {
        self.components
            .iter()
            .filter(|c| c.status == Status::Realized)
            .max_by(|a, b| a.qvalue.total_cmp(&b.qvalue))
    }

    fn ensure_live(&self) -> Result<(), QRuleError> {
        if self.consumed {
            Err(QRuleError::Consumed)
        } else {
            Ok(())
        }
    }

    fn index_of(&self, id: ComponentId) -> Result<usize, QRuleError> {
        self.components
            .iter()
            .position(|c| c.id == id)
            .ok_or(QRuleError::UnknownComponent(id))
    }

    /// Appends a ready component with qvalue 0.
    pub fn add_ready(&mut self, spec: ComponentSpec) -> Result<ComponentId, QRuleError> {
        self.ensure_live()?;
        if self.components.iter().any(|c| c.label == spec.label) {
            return Err(QRuleError::DuplicateChannel(spec.label));
        }
        let id = ComponentId(self.next_id);
        self.next_id += 1;
        self.components.push(Component {
            id,
            label: spec.label,
            factors: spec.factors,
            status: Status::Ready,
            qvalue: 0.0,
        });
        Ok(id)
    }

    /// Moves qvalue along every window by its exact integral over
    /// `[clock, clock + dt]` and advances the clock.
    pub fn evolve(&mut self, schedule: &HitSchedule, dt: f64) -> Result<(), QRuleError> {
        self.ensure_live()?;
        if dt.is_nan() || dt <= 0.0 {
            return Err(QRuleError::InvalidWindow(format!("step must be positive, got {dt}")));
        }
        self.advance(schedule, self.clock + dt)
    }

    fn advance(&mut self, schedule: &HitSchedule, to: f64) -> Result<(), QRuleError> {
        let from = self.clock;
        let mut next = self.components.clone();
        for w in &schedule.windows {
            let moved = w.cumulative(to) - w.cumulative(from);
            if moved == 0.0 {
                continue;
            }
            let s = self.index_of(w.source)?;
            let t = self.index_of(w.target)?;
            next[s].qvalue -= moved;
            next[t].qvalue += moved;
        }
        for c in &mut next {
            if c.qvalue < 0.0 {
                if c.qvalue < -CONSERVATION_TOL {
                    return Err(QRuleError::NegativeQvalue { label: c.label.clone(), value: c.qvalue });
                }
                c.qvalue = 0.0;
            }
        }
        self.components = next;
        self.clock = to;
        Ok(())
    }

    /// Evolves up to conic time `t` (no-op when already there).
    pub fn evolve_to(&mut self, schedule: &HitSchedule, t: f64) -> Result<(), QRuleError> {
        self.ensure_live()?;
        if t > self.clock {
            self.advance(schedule, t)?;
        }
        Ok(())
    }

    pub fn snapshot(&self, stage: impl Into<String>) -> EquationSnapshot {
        EquationSnapshot {
            stage: stage.into(),
            conic_time: self.clock,
            components: self
                .components
                .iter()
                .map(|c| ComponentSnapshot {
                    label: c.label.clone(),
                    status: c.status,
                    qvalue: c.qvalue,
                })
                .collect(),
            total: self.total_qvalue(),
        }
    }

    /// Collapses onto the ready component `branch` hit at conic time `t_hit`
    /// with reduction vertex `vertex`. This equation is consumed; the
    /// successor holds the chosen component alone, realized, with qvalue 1.
    pub fn collapse(
        &mut self,
        branch: ComponentId,
        t_hit: f64,
        vertex: Event,
        label: impl Into<String>,
        frontier: &Frontier,
        tracked: &[TrackedWorldline],
    ) -> Result<Collapse, QRuleError> {
        self.ensure_live()?;
        let chosen = self.components[self.index_of(branch)?].clone();
        if chosen.status != Status::Ready {
            return Err(QRuleError::NotReady(branch));
        }
        let (clipped, frontier) = frontier.insert(vertex)?;

        let mut cutoffs = Vec::new();
        let mut shielded = Vec::new();
        for tw in tracked {
            let Ok(e) = cone_intersect_worldline(vertex, &tw.worldline) else {
                continue;
            };
            if (e.x - vertex.x).abs() <= 1e-12 && (e.t - vertex.t).abs() <= 1e-12 {
                // the carrier itself
                continue;
            }
            if clipped.contains_x(e.x) {
                cutoffs.push(Cutoff { worldline: tw.name.clone(), event: e });
            } else {
                shielded.push(tw.name.clone());
            }
        }

        self.consumed = true;
        let successor = QRuleEquation {
            clock: t_hit,
            components: vec![Component { status: Status::Realized, qvalue: 1.0, ..chosen.clone() }],
            next_id: self.next_id,
            consumed: false,
        };
        Ok(Collapse {
            equation: successor,
            reduction: ReductionEvent {
                label: label.into(),
                vertex,
                component: chosen.label,
                conic_time: t_hit,
                cutoffs,
                shielded,
                clipped,
            },
            frontier,
        })
    }
}

/// A measurement still owed to a carrier after a collapse, in the conic
/// clock of the post-collapse equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingInteraction {
    pub carrier: String,
    pub target: ComponentId,
    pub weight: f64,
    pub t_on: f64,
    pub t_off: Option<f64>,
    pub shape: WindowShape,
}

/// Schedules the pending interactions of carriers restarted by `reduction`.
/// Windows start no earlier than the cutoff (conically simultaneous with the
/// vertex) and their weights are renormalized to the live realized qvalue.
pub fn revive(
    equation: &QRuleEquation,
    reduction: &ReductionEvent,
    pending: &[PendingInteraction],
) -> Result<HitSchedule, QRuleError> {
    equation.ensure_live()?;
    let source = equation
        .realized_component()
        .ok_or_else(|| QRuleError::InvalidWindow("no realized source component".into()))?;
    let mut kept = Vec::new();
    for p in pending {
        let target = equation.component(p.target).ok_or(QRuleError::UnknownComponent(p.target))?;
        if target.status != Status::Ready {
            return Err(QRuleError::NotReady(p.target));
        }
        let t_on = p.t_on.max(reduction.conic_time);
        if p.t_off.is_some_and(|end| end <= t_on) {
            continue;
        }
        kept.push((p, t_on));
    }
    let raw: f64 = kept.iter().map(|(p, _)| p.weight).sum();
    let windows = kept
        .into_iter()
        .map(|(p, t_on)| {
            InteractionWindow::new(
                source.id,
                p.target,
                p.weight / raw * source.qvalue,
                t_on,
                p.t_off,
                p.shape,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    HitSchedule::new(windows)
}

/// Product of independent sums, e.g. `[n₁ + p₁p₁'][n₂ + p₂p₂']`. Each factor
/// evolves and collapses on its own clock; the flat form is their expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductEquation {
    factors: Vec<QRuleEquation>,
    consumed: bool,
}

impl ProductEquation {
    pub fn new(factors: Vec<QRuleEquation>) -> Self {
        Self { factors, consumed: false }
    }

    pub fn factors(&self) -> &[QRuleEquation] {
        &self.factors
    }

    pub fn factor(&self, k: usize) -> &QRuleEquation {
        &self.factors[k]
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn add_ready(&mut self, k: usize, spec: ComponentSpec) -> Result<ComponentId, QRuleError> {
        if self.consumed {
            return Err(QRuleError::Consumed);
        }
        self.factors[k].add_ready(spec)
    }

    /// Evolves factor `k` only; other factors are untouched.
    pub fn evolve_factor(&mut self, k: usize, schedule: &HitSchedule, t: f64) -> Result<(), QRuleError> {
        if self.consumed {
            return Err(QRuleError::Consumed);
        }
        self.factors[k].evolve_to(schedule, t)
    }

    /// Collapses factor `k`; the product is consumed and a successor with
    /// the other factors unchanged is returned.
    #[allow(clippy::too_many_arguments)]
    pub fn collapse_factor(
        &mut self,
        k: usize,
        branch: ComponentId,
        t_hit: f64,
        vertex: Event,
        label: impl Into<String>,
        frontier: &Frontier,
        tracked: &[TrackedWorldline],
    ) -> Result<(ProductEquation, ReductionEvent, Frontier), QRuleError> {
        if self.consumed {
            return Err(QRuleError::Consumed);
        }
        let mut factor = self.factors[k].clone();
        let collapse = factor.collapse(branch, t_hit, vertex, label, frontier, tracked)?;
        let mut factors = self.factors.clone();
        factors[k] = collapse.equation;
        self.factors[k].consumed = true;
        self.consumed = true;
        Ok((ProductEquation::new(factors), collapse.reduction, collapse.frontier))
    }

    pub fn expand(&self) -> QRuleEquation {
        expand_product(self)
    }
}

/// Flat normal form of a product equation: one component per choice of term
/// in each factor, qvalue the product, realized only when every term is.
pub fn expand_product(product: &ProductEquation) -> QRuleEquation {
    if let [single] = product.factors.as_slice() {
        return single.clone();
    }
    let clock = product.factors.iter().map(|f| f.clock).fold(f64::NEG_INFINITY, f64::max);
    let mut terms: Vec<(Vec<&Component>, f64)> = vec![(Vec::new(), 1.0)];
    for factor in &product.factors {
        let mut next = Vec::with_capacity(terms.len() * factor.components.len());
        for (parts, q) in &terms {
            for c in &factor.components {
                let mut parts = parts.clone();
                parts.push(c);
                next.push((parts, q * c.qvalue));
            }
        }
        terms = next;
    }
    let components = terms
        .into_iter()
        .enumerate()
        .map(|(i, (parts, qvalue))| Component {
            id: ComponentId(i as u32),
            label: parts.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(" · "),
            factors: parts.iter().flat_map(|c| c.factors.iter().cloned()).collect(),
            status: if parts.iter().all(|c| c.status == Status::Realized) {
                Status::Realized
            } else {
                Status::Ready
            },
            qvalue,
        })
        .collect::<Vec<_>>();
    let next_id = components.len() as u32;
    QRuleEquation { clock, components, next_id, consumed: product.consumed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singlet_rows() -> (QRuleEquation, Vec<ComponentId>) {
        let mut eq = QRuleEquation::realized(
            0.0,
            ComponentSpec::new("p1 p2 ⊗ M1 M2", vec![Factor::plain("p1"), Factor::plain("p2")]),
        );
        let rows = [
            ("[p1(up) M1] p2(down) ⊗ M2", Spin::Up, true),
            ("p1(up) [p2(down) M2] ⊗ M1", Spin::Up, false),
            ("[p1(down) M1] p2(up) ⊗ M2", Spin::Down, true),
            ("p1(down) [p2(up) M2] ⊗ M1", Spin::Down, false),
        ];
        let ids = rows
            .iter()
            .map(|(label, s1, first)| {
                let factors = if *first {
                    vec![Factor::engaged("p1", *s1, "M1"), Factor::spin("p2", s1.flipped())]
                } else {
                    vec![Factor::spin("p1", *s1), Factor::engaged("p2", s1.flipped(), "M2")]
                };
                eq.add_ready(ComponentSpec::new(*label, factors)).unwrap()
            })
            .collect();
        (eq, ids)
    }

    #[test]
    fn evolve_to_lands_exactly() {
        let mut eq = QRuleEquation::realized(0.0, ComponentSpec::new("n", vec![Factor::plain("n")]));
        let id = eq.add_ready(ComponentSpec::new("p", vec![Factor::plain("p")])).unwrap();
        let w = InteractionWindow::new(ComponentId(0), id, 1.0, 0.0, None, WindowShape::Exponential { rate: 0.5 })
            .unwrap();
        let schedule = HitSchedule::new(vec![w]).unwrap();
        eq.evolve_to(&schedule, 0.8131429136782644).unwrap();
        eq.evolve_to(&schedule, 3.1561024773508475).unwrap();
        assert_eq!(eq.snapshot("s").conic_time, 3.1561024773508475);
    }

    fn constant_windows(ids: &[ComponentId], w: f64, t_on: f64, t_off: f64) -> HitSchedule {
        HitSchedule::new(
            ids.iter()
                .map(|&id| {
                    InteractionWindow::new(ComponentId(0), id, w, t_on, Some(t_off), WindowShape::Constant)
                        .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn add_ready_rows_start_at_zero() {
        let (eq, ids) = singlet_rows();
        assert_eq!(ids.len(), 4);
        for id in ids {
            let c = eq.component(id).unwrap();
            assert_eq!(c.status, Status::Ready);
            assert_eq!(c.qvalue, 0.0);
        }
        assert_eq!(eq.total_qvalue(), 1.0);
    }

    #[test]
    fn add_ready_rejects_duplicates() {
        let (mut eq, _) = singlet_rows();
        let err = eq
            .add_ready(ComponentSpec::new("[p1(up) M1] p2(down) ⊗ M2", vec![]))
            .unwrap_err();
        assert!(matches!(err, QRuleError::DuplicateChannel(_)));
    }

    #[test]
    fn add_ready_after_full_collapse() {
        let (mut eq, ids) = singlet_rows();
        let c = eq
            .collapse(ids[0], 1.0, Event::new(-1.0, 2.0), "A", &Frontier::new(), &[])
            .unwrap();
        let mut next = c.equation;
        let id = next.add_ready(ComponentSpec::new("[p1(up) M1][p2(down) M2]", vec![])).unwrap();
        assert_eq!(next.component(id).unwrap().qvalue, 0.0);
        assert_eq!(next.total_qvalue(), 1.0);
    }

    #[test]
    fn current_examples() {
        let c = InteractionWindow::new(ComponentId(0), ComponentId(1), 0.25, 0.0, Some(1.0), WindowShape::Constant)
            .unwrap();
        assert_eq!(c.current(0.3), 0.25);
        assert_eq!(c.current(1.5), 0.0);
        assert_eq!(c.current(-0.1), 0.0);
        let rc = InteractionWindow { shape: WindowShape::RaisedCosine, ..c };
        assert!((rc.current(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(rc.current(2.0), 0.0);
        assert!((rc.cumulative(1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn window_validation() {
        let ok = |w, on, off, shape| InteractionWindow::new(ComponentId(0), ComponentId(1), w, on, off, shape);
        assert!(ok(0.0, 0.0, Some(1.0), WindowShape::Constant).is_err());
        assert!(ok(1.5, 0.0, Some(1.0), WindowShape::Constant).is_err());
        assert!(ok(0.5, 1.0, Some(1.0), WindowShape::RaisedCosine).is_err());
        assert!(ok(0.5, 0.0, None, WindowShape::Constant).is_err());
        assert!(ok(1.0, 0.0, Some(2.0), WindowShape::Exponential { rate: 1.0 }).is_err());
        assert!(ok(1.0, 0.0, None, WindowShape::Exponential { rate: -1.0 }).is_err());
        assert!(ok(1.0, 0.0, None, WindowShape::Exponential { rate: 1.0 }).is_ok());
    }

    #[test]
    fn evolve_transfers_exact_integral() {
        let (mut eq, ids) = singlet_rows();
        let schedule = constant_windows(&ids[..1], 0.25, 0.0, 1.0);
        eq.evolve(&schedule, 0.4).unwrap();
        assert!((eq.component(ids[0]).unwrap().qvalue - 0.1).abs() < 1e-15);
        assert!((eq.component(ComponentId(0)).unwrap().qvalue - 0.9).abs() < 1e-15);
        assert!((eq.clock() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn evolve_without_active_window_is_identity() {
        let (mut eq, ids) = singlet_rows();
        let before = eq.components().to_vec();
        eq.evolve(&constant_windows(&ids, 0.25, 5.0, 6.0), 1.0).unwrap();
        assert_eq!(eq.components(), before.as_slice());
    }

    #[test]
    fn evolve_through_all_windows_drains_realized() {
        let (mut eq, ids) = singlet_rows();
        eq.evolve(&constant_windows(&ids, 0.25, 0.0, 1.0), 2.0).unwrap();
        for id in &ids {
            assert!((eq.component(*id).unwrap().qvalue - 0.25).abs() < 1e-15);
        }
        assert!(eq.component(ComponentId(0)).unwrap().qvalue.abs() < 1e-15);
        assert!((eq.total_qvalue() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolve_detects_over_drain() {
        let mut eq = QRuleEquation::realized(0.0, ComponentSpec::new("s", vec![]));
        let a = eq.add_ready(ComponentSpec::new("a", vec![])).unwrap();
        let b = eq.add_ready(ComponentSpec::new("b", vec![])).unwrap();
        // both windows draw from a, which never holds more than 0.25
        let schedule = HitSchedule {
            windows: vec![
                InteractionWindow::new(ComponentId(0), a, 0.25, 0.0, Some(1.0), WindowShape::Constant).unwrap(),
                InteractionWindow::new(a, b, 0.9, 0.0, Some(1.0), WindowShape::Constant).unwrap(),
            ],
        };
        let err = eq.evolve(&schedule, 1.0).unwrap_err();
        assert!(matches!(err, QRuleError::NegativeQvalue { .. }));
    }

    #[test]
    fn sample_four_constant_windows() {
        let (_, ids) = singlet_rows();
        let schedule = constant_windows(&ids, 0.25, 0.0, 1.0);
        let hit = schedule.sample_hit(0.6, 0.1).unwrap().unwrap();
        // C(t) = t on [0, 1]
        assert!((hit.time - 0.6).abs() < 1e-15);
        assert_eq!(hit.window, 0);
        assert_eq!(hit.target, ids[0]);
        let hit = schedule.sample_hit(0.6, 0.8).unwrap().unwrap();
        assert_eq!(hit.target, ids[3]);
    }

    #[test]
    fn sample_at_zero_is_support_start() {
        let (_, ids) = singlet_rows();
        let schedule = constant_windows(&ids, 0.25, 3.0, 4.0);
        assert_eq!(schedule.sample_hit(0.0, 0.5).unwrap().unwrap().time, 3.0);
        let rc = HitSchedule::new(
            schedule
                .windows
                .iter()
                .map(|w| InteractionWindow { shape: WindowShape::RaisedCosine, ..*w })
                .collect(),
        )
        .unwrap();
        let hit = rc.sample_hit(0.0, 0.9).unwrap().unwrap();
        assert_eq!(hit.time, 3.0);
        assert_eq!(hit.target, ids[3]);
    }

    #[test]
    fn current_runs_out() {
        let (_, ids) = singlet_rows();
        let half = constant_windows(&ids[..2], 0.25, 0.0, 1.0);
        assert_eq!(half.sample_hit(0.7, 0.3).unwrap(), None);
        assert!(half.sample_hit(0.49, 0.3).unwrap().is_some());
        assert!(half.sample_hit(1.0, 0.3).is_err());
    }

    #[test]
    fn inversion_recovers_time_for_every_shape() {
        let (_, ids) = singlet_rows();
        let mut windows = constant_windows(&ids[..2], 0.2, 1.0, 3.0).windows;
        windows.push(
            InteractionWindow::new(ComponentId(0), ids[2], 0.3, 2.0, Some(4.5), WindowShape::RaisedCosine).unwrap(),
        );
        windows.push(
            InteractionWindow::new(ComponentId(0), ids[3], 0.2, 6.0, None, WindowShape::Exponential { rate: 2.0 })
                .unwrap(),
        );
        let schedule = HitSchedule::new(windows).unwrap();
        for i in 1..100 {
            let u = 0.9 * i as f64 / 100.0;
            let t = schedule.sample_hit(u, 0.5).unwrap().unwrap().time;
            assert!((schedule.cumulative(t) - u).abs() < 1e-10, "u = {u}, t = {t}");
        }
    }

    #[test]
    fn exponential_inversion_is_translation_exact() {
        let w = |t_on| {
            HitSchedule::new(vec![InteractionWindow::new(
                ComponentId(0),
                ComponentId(1),
                1.0,
                t_on,
                None,
                WindowShape::Exponential { rate: 1.0 },
            )
            .unwrap()])
            .unwrap()
        };
        let a = w(0.0).sample_hit(0.37, 0.2).unwrap().unwrap().time;
        let b = w(5.0).sample_hit(0.37, 0.2).unwrap().unwrap().time;
        assert_eq!(b, 5.0 + a);
        assert!((a + (1.0f64 - 0.37).ln()).abs() < 1e-15);
    }

    #[test]
    fn collapse_keeps_only_the_chosen_row() {
        let (mut eq, ids) = singlet_rows();
        let schedule = constant_windows(&ids, 0.25, 0.0, 1.0);
        eq.evolve_to(&schedule, 0.3).unwrap();
        let c = eq.collapse(ids[0], 0.3, Event::new(-1.0, 2.0), "A", &Frontier::new(), &[]).unwrap();
        assert_eq!(c.equation.components().len(), 1);
        let only = &c.equation.components()[0];
        assert_eq!(only.status, Status::Realized);
        assert_eq!(only.qvalue, 1.0);
        assert_eq!(only.label, "[p1(up) M1] p2(down) ⊗ M2");
        assert_eq!(c.equation.total_qvalue(), 1.0);
        assert_eq!(c.frontier.vertices(), &[Event::new(-1.0, 2.0)]);
    }

    #[test]
    fn collapse_on_realized_is_not_ready() {
        let (mut eq, _) = singlet_rows();
        let err = eq
            .collapse(ComponentId(0), 0.1, Event::new(0.0, 1.0), "A", &Frontier::new(), &[])
            .unwrap_err();
        assert_eq!(err, QRuleError::NotReady(ComponentId(0)));
        assert!(!eq.is_consumed());
    }

    #[test]
    fn consumed_equation_rejects_writes() {
        let (mut eq, ids) = singlet_rows();
        let schedule = constant_windows(&ids, 0.25, 0.0, 1.0);
        eq.collapse(ids[1], 0.5, Event::new(1.0, 2.0), "A", &Frontier::new(), &[]).unwrap();
        assert!(eq.is_consumed());
        assert_eq!(eq.add_ready(ComponentSpec::new("x", vec![])), Err(QRuleError::Consumed));
        assert_eq!(eq.evolve(&schedule, 0.1), Err(QRuleError::Consumed));
        assert!(matches!(
            eq.collapse(ids[0], 0.5, Event::new(-1.0, 2.0), "B", &Frontier::new(), &[]),
            Err(QRuleError::Consumed)
        ));
    }

    #[test]
    fn collapse_below_frontier_is_causal_violation() {
        let (mut eq, ids) = singlet_rows();
        let (_, frontier) = Frontier::new().insert(Event::new(0.0, 5.0)).unwrap();
        let err = eq.collapse(ids[0], 0.1, Event::new(0.0, 1.0), "A", &frontier, &[]).unwrap_err();
        assert!(matches!(err, QRuleError::Geometry(GeometryError::CausalViolation { .. })));
        assert!(!eq.is_consumed());
    }

    #[test]
    fn collapse_records_cutoffs_on_the_cone() {
        let (mut eq, ids) = singlet_rows();
        let p2 = Worldline::new(Event::new(0.0, 0.0), 0.5).unwrap();
        let p1 = Worldline::new(Event::new(0.0, 0.0), -0.5).unwrap();
        let tracked = [
            TrackedWorldline { name: "p1".into(), worldline: p1 },
            TrackedWorldline { name: "p2".into(), worldline: p2 },
        ];
        let a = Event::new(-2.0, 4.0);
        let c = eq.collapse(ids[0], 6.0, a, "A", &Frontier::new(), &tracked).unwrap();
        assert_eq!(c.reduction.cutoffs.len(), 1);
        let b = &c.reduction.cutoffs[0];
        assert_eq!(b.worldline, "p2");
        assert!((b.event.x - 2.0 / 3.0).abs() < 1e-12 && (b.event.t - 4.0 / 3.0).abs() < 1e-12);
        assert!(crate::geometry::on_cone(a, b.event));
    }

    #[test]
    fn revive_sole_channel_gets_full_weight() {
        let (mut eq, ids) = singlet_rows();
        let p2 = Worldline::new(Event::new(0.0, 0.0), 0.5).unwrap();
        let tracked = [TrackedWorldline { name: "p2".into(), worldline: p2 }];
        let c = eq.collapse(ids[0], 6.0, Event::new(-2.0, 4.0), "A", &Frontier::new(), &tracked).unwrap();
        let mut next = c.equation;
        let target = next.add_ready(ComponentSpec::new("[p1(up) M1][p2(down) M2]", vec![])).unwrap();
        let pending = [PendingInteraction {
            carrier: "p2".into(),
            target,
            weight: 0.25,
            t_on: 4.0 / 3.0,
            t_off: Some(9.0),
            shape: WindowShape::RaisedCosine,
        }];
        let schedule = revive(&next, &c.reduction, &pending).unwrap();
        assert_eq!(schedule.windows.len(), 1);
        assert_eq!(schedule.windows[0].weight, 1.0);
        assert!(schedule.windows[0].t_on >= 4.0 / 3.0);
        assert_eq!(schedule.windows[0].t_on, 6.0);
        assert!(revive(&next, &c.reduction, &[]).unwrap().windows.is_empty());
    }

    fn nucleus(name: &str, product: &str) -> QRuleEquation {
        let mut eq = QRuleEquation::realized(0.0, ComponentSpec::new(name, vec![Factor::plain(name)]));
        eq.add_ready(ComponentSpec::new(product, vec![Factor::plain(product)])).unwrap();
        eq
    }

    #[test]
    fn expand_two_by_two() {
        let product = ProductEquation::new(vec![nucleus("n1", "p1p1'"), nucleus("n2", "p2p2'")]);
        let flat = expand_product(&product);
        let labels: Vec<_> = flat.components().iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["n1 · n2", "n1 · p2p2'", "p1p1' · n2", "p1p1' · p2p2'"]);
        let realized: Vec<_> = flat.components().iter().filter(|c| c.status == Status::Realized).collect();
        assert_eq!(realized.len(), 1);
        assert_eq!(realized[0].label, "n1 · n2");
        assert_eq!(flat.total_qvalue(), 1.0);
    }

    #[test]
    fn expand_single_factor_is_unchanged() {
        let eq = nucleus("n1", "p1p1'");
        assert_eq!(expand_product(&ProductEquation::new(vec![eq.clone()])), eq);
    }

    #[test]
    fn factor_current_stays_in_its_factor() {
        let mut product = ProductEquation::new(vec![nucleus("n1", "p1p1'"), nucleus("n2", "p2p2'")]);
        let s1 = HitSchedule::new(vec![InteractionWindow::new(
            ComponentId(0),
            ComponentId(1),
            1.0,
            0.0,
            None,
            WindowShape::Exponential { rate: 1.0 },
        )
        .unwrap()])
        .unwrap();
        product.evolve_factor(0, &s1, 0.7).unwrap();
        let flat = product.expand();
        let q = |i: usize| flat.components()[i].qvalue;
        // factor 2 untouched: every n2 term keeps all of factor 2's qvalue
        assert_eq!(q(1), 0.0);
        assert_eq!(q(3), 0.0);
        assert!((q(0) - (-0.7f64).exp()).abs() < 1e-15);
        assert!((flat.total_qvalue() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn factor_collapse_leaves_other_factor_running() {
        let mut product = ProductEquation::new(vec![nucleus("n1", "p1p1'"), nucleus("n2", "p2p2'")]);
        let s2 = HitSchedule::new(vec![InteractionWindow::new(
            ComponentId(0),
            ComponentId(1),
            1.0,
            0.0,
            None,
            WindowShape::Exponential { rate: 1.0 },
        )
        .unwrap()])
        .unwrap();
        product.evolve_factor(1, &s2, 0.5).unwrap();
        let before = product.factor(1).clone();
        let (next, reduction, _) = product
            .collapse_factor(0, ComponentId(1), 0.5, Event::new(-3.0, 0.5), "A", &Frontier::new(), &[])
            .unwrap();
        assert!(product.is_consumed());
        assert_eq!(reduction.component, "p1p1'");
        assert_eq!(next.factor(1).components(), before.components());
        assert!((next.expand().total_qvalue() - 1.0).abs() < 1e-12);
        assert_eq!(product.evolve_factor(1, &s2, 1.0), Err(QRuleError::Consumed));
    }
}
