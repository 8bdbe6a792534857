//! Events, worldlines and backward light cones in 1+1 Minkowski space (c = 1),
//! plus the frontier: the upper envelope of every realized reduction cone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for "lies on a cone surface" checks.
pub const ON_CONE_TOL: f64 = 1e-9;
/// Tolerance for algebraic identities (intersections, slopes).
pub const ALGEBRAIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("velocity {0} is not subluminal (|v| must be < 1)")]
    InvalidVelocity(f64),
    #[error("worldline does not cross the backward cone of ({x}, {t}) within its lifetime")]
    NoIntersection { x: f64, t: f64 },
    #[error("vertex ({x}, {t}) lies below the frontier F(x) = {floor}")]
    CausalViolation { x: f64, t: f64, floor: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A point of 1+1 Minkowski space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: f64,
    pub t: f64,
}

/// Causal relation of one event to another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalRelation {
    Timelike,
    Lightlike,
    Spacelike,
}

impl Event {
    pub const fn new(x: f64, t: f64) -> Self {
        Self { x, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.t.is_finite()
    }

    /// Squared interval Δt² − Δx² to `other`.
    pub fn interval_to(&self, other: &Event) -> f64 {
        let dt = other.t - self.t;
        let dx = other.x - self.x;
        dt * dt - dx * dx
    }

    /// Classifies the separation from `self` to `other`. Lightlike within `tol`
    /// of |Δt| = |Δx|, and the coincident pair counts as lightlike.
    pub fn relation_to(&self, other: &Event, tol: f64) -> CausalRelation {
        let gap = (other.t - self.t).abs() - (other.x - self.x).abs();
        if gap.abs() <= tol {
            CausalRelation::Lightlike
        } else if gap > 0.0 {
            CausalRelation::Timelike
        } else {
            CausalRelation::Spacelike
        }
    }

    /// True when `self` is in the closed causal past of `other`.
    pub fn in_closed_past_of(&self, other: &Event) -> bool {
        other.t - self.t >= (other.x - self.x).abs()
    }
}

/// Straight constant-velocity worldline of a massive carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Worldline {
    pub origin: Event,
    pub velocity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
}

impl Worldline {
    pub fn new(origin: Event, velocity: f64) -> Result<Self, GeometryError> {
        check_velocity(velocity)?;
        if !origin.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { origin, velocity, end_time: None })
    }

    pub fn with_end(mut self, end_time: f64) -> Self {
        self.end_time = Some(end_time);
        self
    }

    pub fn position_at(&self, t: f64) -> f64 {
        self.origin.x + self.velocity * (t - self.origin.t)
    }

    pub fn event_at(&self, t: f64) -> Event {
        Event::new(self.position_at(t), t)
    }

    pub fn exists_at(&self, t: f64) -> bool {
        t >= self.origin.t && self.end_time.is_none_or(|end| t <= end)
    }

    /// The same worldline seen from a frame moving with velocity `v`.
    pub fn boosted(&self, v: f64) -> Result<Self, GeometryError> {
        let origin = boost(self.origin, v)?;
        let velocity = (self.velocity - v) / (1.0 - self.velocity * v);
        let end_time = match self.end_time {
            Some(end) => Some(boost(self.event_at(end), v)?.t),
            None => None,
        };
        Ok(Self { origin, velocity, end_time })
    }
}

pub(crate) fn check_velocity(v: f64) -> Result<(), GeometryError> {
    if v.is_finite() && v.abs() < 1.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidVelocity(v))
    }
}

/// Time of the backward cone surface of `vertex` above position `x`.
pub fn cone_time(vertex: Event, x: f64) -> f64 {
    vertex.t - (x - vertex.x).abs()
}

pub fn on_cone(vertex: Event, e: Event) -> bool {
    (e.t - cone_time(vertex, e.x)).abs() <= ON_CONE_TOL
}

/// The unique event where `w` crosses the backward cone of `vertex`.
///
/// `t - cone_time(vertex, w(t))` is strictly increasing for |v| < 1, so the
/// crossing is unique; we solve the linear equation on each ray and keep the
/// candidate on its own side of the vertex.
pub fn cone_intersect_worldline(vertex: Event, w: &Worldline) -> Result<Event, GeometryError> {
    let (x0, t0, v) = (w.origin.x, w.origin.t, w.velocity);
    // left ray: t = vertex.t - vertex.x + x(t)
    let t_left = (vertex.t - vertex.x + x0 - v * t0) / (1.0 - v);
    // right ray: t = vertex.t + vertex.x - x(t)
    let t_right = (vertex.t + vertex.x - x0 + v * t0) / (1.0 + v);
    let t = if w.position_at(t_left) <= vertex.x {
        t_left
    } else {
        t_right
    };
    if !t.is_finite() || !w.exists_at(t) {
        return Err(GeometryError::NoIntersection { x: vertex.x, t: vertex.t });
    }
    Ok(w.event_at(t))
}

/// Lorentz transform into the frame moving with velocity `v`.
pub fn boost(e: Event, v: f64) -> Result<Event, GeometryError> {
    check_velocity(v)?;
    let gamma = 1.0 / (1.0 - v * v).sqrt();
    Ok(Event::new(gamma * (e.x - v * e.t), gamma * (e.t - v * e.x)))
}

/// Conic clock whose level sets are the backward cones of vertices moving
/// along a static reference line through `anchor`. The anchor's own cone
/// carries conic time `anchor_time`, so clocks chain continuously across a
/// reduction: every event on the reduction cone reads the hit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicClock {
    pub anchor: Event,
    pub anchor_time: f64,
}

impl ConicClock {
    pub fn new(anchor: Event, anchor_time: f64) -> Self {
        Self { anchor, anchor_time }
    }

    /// Clock for a reference line through `anchor` reading its coordinate time.
    pub fn at_rest(anchor: Event) -> Self {
        Self { anchor, anchor_time: anchor.t }
    }

    pub fn conic_time(&self, e: Event) -> f64 {
        self.anchor_time + (e.t - self.anchor.t) + (e.x - self.anchor.x).abs()
    }

    /// Reference vertex whose backward cone is the level set `conic_time`.
    pub fn vertex_at(&self, conic_time: f64) -> Event {
        Event::new(self.anchor.x, self.anchor.t + (conic_time - self.anchor_time))
    }

    /// Event of `w` at the given conic time.
    pub fn event_on(&self, w: &Worldline, conic_time: f64) -> Result<Event, GeometryError> {
        cone_intersect_worldline(self.vertex_at(conic_time), w)
    }
}

/// Where one side of a freshly inserted cone stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RayEnd {
    /// Meets the prior frontier at this event.
    Meets(Event),
    /// Never meets the prior frontier; runs to spatial infinity.
    Unbounded,
}

impl RayEnd {
    pub fn event(&self) -> Option<Event> {
        match self {
            RayEnd::Meets(e) => Some(*e),
            RayEnd::Unbounded => None,
        }
    }
}

/// The visible part of a reduction cone: vertex plus the two ray terminations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippedCone {
    pub vertex: Event,
    pub left: RayEnd,
    pub right: RayEnd,
}

impl ClippedCone {
    /// Polyline left end → vertex → right end. Unbounded rays are cut at
    /// `x_min` / `x_max`.
    pub fn polyline(&self, x_min: f64, x_max: f64) -> Vec<Event> {
        let left = self.left.event().unwrap_or_else(|| {
            let x = x_min.min(self.vertex.x);
            Event::new(x, cone_time(self.vertex, x))
        });
        let right = self.right.event().unwrap_or_else(|| {
            let x = x_max.max(self.vertex.x);
            Event::new(x, cone_time(self.vertex, x))
        });
        vec![left, self.vertex, right]
    }

    /// Horizontal extent; infinite on unbounded sides.
    pub fn x_span(&self) -> (f64, f64) {
        (
            self.left.event().map_or(f64::NEG_INFINITY, |e| e.x),
            self.right.event().map_or(f64::INFINITY, |e| e.x),
        )
    }

    pub fn contains_x(&self, x: f64) -> bool {
        let (lo, hi) = self.x_span();
        x >= lo && x <= hi
    }
}

/// Upper envelope t = F(x) of the backward cones of all inserted vertices.
///
/// Only non-dominated vertices are kept; consecutive ones are spacelike
/// separated, so every valley between them is a single slope-±1 corner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    vertices: Vec<Event>,
    breakpoints: Vec<Event>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Non-dominated peaks, sorted by x.
    pub fn vertices(&self) -> &[Event] {
        &self.vertices
    }

    /// Peaks and valleys in x order.
    pub fn breakpoints(&self) -> &[Event] {
        &self.breakpoints
    }

    /// F(x), or `None` while the frontier is empty (F ≡ −∞).
    pub fn eval(&self, x: f64) -> Option<f64> {
        if self.vertices.is_empty() {
            return None;
        }
        let idx = self.vertices.partition_point(|v| v.x <= x);
        let mut best = f64::NEG_INFINITY;
        if idx > 0 {
            best = best.max(cone_time(self.vertices[idx - 1], x));
        }
        if idx < self.vertices.len() {
            best = best.max(cone_time(self.vertices[idx], x));
        }
        Some(best)
    }

    /// Inserts a reduction vertex, returning the part of its cone above the
    /// old envelope together with the updated envelope.
    pub fn insert(&self, vertex: Event) -> Result<(ClippedCone, Frontier), GeometryError> {
        if !vertex.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if let Some(floor) = self.eval(vertex.x) {
            if vertex.t < floor - ALGEBRAIC_TOL {
                return Err(GeometryError::CausalViolation { x: vertex.x, t: vertex.t, floor });
            }
        }

        // Left ray L(x) = (t_n - x_n) + x stays above cone k up to m_k, the
        // crossing with k's right ray, whenever k's left ray is not below L.
        let left_intercept = vertex.t - vertex.x;
        let right_intercept = vertex.t + vertex.x;
        let mut left_meet = f64::NEG_INFINITY;
        let mut right_meet = f64::INFINITY;
        for k in &self.vertices {
            if k.t - k.x >= left_intercept {
                left_meet = left_meet.max((k.t + k.x - left_intercept) / 2.0);
            }
            if k.t + k.x >= right_intercept {
                right_meet = right_meet.min((right_intercept - (k.t - k.x)) / 2.0);
            }
        }
        let left = if left_meet.is_finite() {
            let x = left_meet.min(vertex.x);
            RayEnd::Meets(Event::new(x, cone_time(vertex, x)))
        } else {
            RayEnd::Unbounded
        };
        let right = if right_meet.is_finite() {
            let x = right_meet.max(vertex.x);
            RayEnd::Meets(Event::new(x, cone_time(vertex, x)))
        } else {
            RayEnd::Unbounded
        };

        let mut next = self.clone();
        next.absorb(vertex);
        debug_assert!(next.slopes_are_lightlike());
        Ok((ClippedCone { vertex, left, right }, next))
    }

    fn absorb(&mut self, vertex: Event) {
        if self.vertices.iter().any(|k| vertex.in_closed_past_of(k)) {
            return;
        }
        self.vertices.retain(|k| !k.in_closed_past_of(&vertex));
        let idx = self.vertices.partition_point(|k| k.x < vertex.x);
        self.vertices.insert(idx, vertex);
        self.rebuild_breakpoints();
    }

    fn rebuild_breakpoints(&mut self) {
        let mut points = Vec::with_capacity(2 * self.vertices.len());
        for pair in self.vertices.windows(2) {
            let (l, r) = (pair[0], pair[1]);
            points.push(l);
            points.push(valley(l, r));
        }
        if let Some(last) = self.vertices.last() {
            points.push(*last);
        }
        self.breakpoints = points;
    }

    /// Every segment between consecutive breakpoints has slope ±1.
    pub fn slopes_are_lightlike(&self) -> bool {
        self.breakpoints.windows(2).all(|pair| {
            let dx = pair[1].x - pair[0].x;
            let dt = pair[1].t - pair[0].t;
            dx >= 0.0 && (dt.abs() - dx).abs() <= ALGEBRAIC_TOL * (1.0 + dx.abs())
        })
    }

    /// Rebuilds a frontier by inserting vertices in order, without the
    /// causal precondition (used when replaying stored traces).
    pub fn from_vertices<I: IntoIterator<Item = Event>>(vertices: I) -> Self {
        let mut frontier = Frontier::new();
        for v in vertices {
            frontier.absorb(v);
        }
        frontier
    }
}

/// Corner where the right ray of `l` meets the left ray of `r`.
fn valley(l: Event, r: Event) -> Event {
    let x = (l.t - r.t + l.x + r.x) / 2.0;
    Event::new(x, cone_time(l, x))
}
