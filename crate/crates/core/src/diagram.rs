//! SVG Minkowski diagrams of run traces.
//!
//! World coordinates are boosted (optionally), clipped to the world window
//! and mapped to pixels by `px = (x - x_min)·sx`, `py = H - (t - t_min)·sy`.
//! Output is a pure function of the trace and the [`DiagramSpec`].

use crate::geometry::{boost, Event, GeometryError, RayEnd};
use crate::scenarios::{Role, RunTrace};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagramError {
    #[error("world window does not contain {what} at ({x}, {t})")]
    WindowTooSmall { what: String, x: f64, t: f64 },
    #[error("invalid diagram spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Style {
    /// Opacity of the earliest reduction's shading.
    pub shade_first: f64,
    /// Opacity of the latest reduction's shading.
    pub shade_last: f64,
    pub window_opacity: f64,
    pub stroke_width: f64,
    pub marker_radius: f64,
    pub font_family: String,
    pub font_size: f64,
}

impl Default for Style {
    fn default() -> Self {
        Self {
            shade_first: 0.55,
            shade_last: 0.2,
            window_opacity: 0.35,
            stroke_width: 1.5,
            marker_radius: 4.0,
            font_family: "sans-serif".into(),
            font_size: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramSpec {
    pub width: f64,
    pub height: f64,
    pub x_range: [f64; 2],
    pub t_range: [f64; 2],
    #[serde(default)]
    pub style: Style,
}

const EDGE_TOL: f64 = 1e-9;

impl DiagramSpec {
    pub fn new(width: f64, height: f64, x_range: [f64; 2], t_range: [f64; 2]) -> Result<Self, DiagramError> {
        let spec = Self { width, height, x_range, t_range, style: Style::default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DiagramError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.width) || !ok(self.height) {
            return Err(DiagramError::InvalidSpec("canvas size must be positive".into()));
        }
        if !ok(self.x_range[1] - self.x_range[0]) || !ok(self.t_range[1] - self.t_range[0]) {
            return Err(DiagramError::InvalidSpec("world ranges must be increasing".into()));
        }
        Ok(())
    }

    pub fn scale(&self) -> (f64, f64) {
        (
            self.width / (self.x_range[1] - self.x_range[0]),
            self.height / (self.t_range[1] - self.t_range[0]),
        )
    }

    /// World event to canvas pixel.
    pub fn to_pixel(&self, e: Event) -> (f64, f64) {
        let (sx, sy) = self.scale();
        ((e.x - self.x_range[0]) * sx, self.height - (e.t - self.t_range[0]) * sy)
    }

    /// Canvas pixel to world event.
    pub fn to_world(&self, px: f64, py: f64) -> Event {
        let (sx, sy) = self.scale();
        Event::new(self.x_range[0] + px / sx, self.t_range[0] + (self.height - py) / sy)
    }

    fn contains(&self, e: Event) -> bool {
        e.x >= self.x_range[0] - EDGE_TOL
            && e.x <= self.x_range[1] + EDGE_TOL
            && e.t >= self.t_range[0] - EDGE_TOL
            && e.t <= self.t_range[1] + EDGE_TOL
    }

    /// Isotropic 800×600 window around every event of the trace as seen
    /// from the frame moving with `velocity`.
    pub fn fit(trace: &RunTrace, velocity: f64) -> Result<Self, DiagramError> {
        let (width, height) = (800.0, 600.0);
        let events = key_events(trace, velocity)?;
        let mut lo = Event::new(-1.0, 0.0);
        let mut hi = Event::new(1.0, 1.0);
        for (_, e) in &events {
            lo = Event::new(lo.x.min(e.x), lo.t.min(e.t));
            hi = Event::new(hi.x.max(e.x), hi.t.max(e.t));
        }
        let pad = 0.15 * (hi.x - lo.x).max(hi.t - lo.t);
        let (mut x0, mut x1) = (lo.x - pad, hi.x + pad);
        let (mut t0, mut t1) = (lo.t - pad, hi.t + pad);
        // widen the short side so that both axes share one scale
        let scale = (width / (x1 - x0)).min(height / (t1 - t0));
        let (dx, dt) = (width / scale - (x1 - x0), height / scale - (t1 - t0));
        x0 -= dx / 2.0;
        x1 += dx / 2.0;
        t0 -= dt / 2.0;
        t1 += dt / 2.0;
        let down = |v: f64| (v * 1000.0).floor() / 1000.0;
        let up = |v: f64| (v * 1000.0).ceil() / 1000.0;
        let (x0, t0) = (down(x0), down(t0));
        let unit = ((up(x1) - x0) / width).max((up(t1) - t0) / height);
        Self::new(width, height, [x0, x0 + unit * width], [t0, t0 + unit * height])
    }
}

/// Events the world window must contain, in the boosted frame.
fn key_events(trace: &RunTrace, v: f64) -> Result<Vec<(String, Event)>, GeometryError> {
    let mut out = Vec::new();
    for w in &trace.worldlines {
        out.push((format!("origin of {}", w.name), w.worldline.origin));
    }
    for r in &trace.reductions {
        out.push((format!("reduction {}", r.label), r.vertex));
        for c in &r.cutoffs {
            out.push((format!("cutoff of {} by {}", c.worldline, r.label), c.event));
        }
        for end in [r.clipped.left, r.clipped.right] {
            if let RayEnd::Meets(e) = end {
                out.push((format!("cone end of {}", r.label), e));
            }
        }
    }
    for w in &trace.windows {
        for e in w.region {
            out.push((format!("window of {}", w.carrier), e));
        }
    }
    out.into_iter().map(|(what, e)| Ok((what, boost(e, v)?))).collect()
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn gray(opacity: f64) -> String {
    let level = (255.0 * (1.0 - opacity.clamp(0.0, 1.0))).round() as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

/// Liang–Barsky clip of segment `a → b` to the spec's world window.
fn clip_segment(spec: &DiagramSpec, a: Event, b: Event) -> Option<(Event, Event)> {
    let (dx, dt) = (b.x - a.x, b.t - a.t);
    let (mut u0, mut u1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.x - spec.x_range[0]),
        (dx, spec.x_range[1] - a.x),
        (-dt, a.t - spec.t_range[0]),
        (dt, spec.t_range[1] - a.t),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                u0 = u0.max(r);
            } else {
                u1 = u1.min(r);
            }
        }
    }
    if u0 > u1 {
        return None;
    }
    let at = |u: f64| match u {
        0.0 => a,
        1.0 => b,
        _ => Event::new(a.x + u * dx, a.t + u * dt),
    };
    Some((at(u0), at(u1)))
}

/// Sutherland–Hodgman clip of a polygon to the world window.
fn clip_polygon(spec: &DiagramSpec, poly: Vec<Event>) -> Vec<Event> {
    type Edge = (fn(Event, f64) -> bool, fn(Event, Event, f64) -> Event, f64);
    fn cross_x(a: Event, b: Event, x: f64) -> Event {
        Event::new(x, a.t + (b.t - a.t) * (x - a.x) / (b.x - a.x))
    }
    fn cross_t(a: Event, b: Event, t: f64) -> Event {
        Event::new(a.x + (b.x - a.x) * (t - a.t) / (b.t - a.t), t)
    }
    let edges: [Edge; 4] = [
        (|e, v| e.x >= v, cross_x, spec.x_range[0]),
        (|e, v| e.x <= v, cross_x, spec.x_range[1]),
        (|e, v| e.t >= v, cross_t, spec.t_range[0]),
        (|e, v| e.t <= v, cross_t, spec.t_range[1]),
    ];
    let mut out = poly;
    for (inside, cross, value) in edges {
        let input = std::mem::take(&mut out);
        for (i, &cur) in input.iter().enumerate() {
            let prev = input[(i + input.len() - 1) % input.len()];
            match (inside(cur, value), inside(prev, value)) {
                (true, true) => out.push(cur),
                (true, false) => {
                    out.push(cross(prev, cur, value));
                    out.push(cur);
                }
                (false, true) => out.push(cross(prev, cur, value)),
                (false, false) => {}
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

/// Distance along a lightlike ray that is sure to leave the window.
fn reach(spec: &DiagramSpec, from: Event) -> f64 {
    (spec.x_range[1] - spec.x_range[0])
        + (spec.t_range[1] - spec.t_range[0])
        + (from.x - spec.x_range[0]).abs()
        + (from.x - spec.x_range[1]).abs()
        + (from.t - spec.t_range[0]).abs()
        + 1.0
}

fn points(spec: &DiagramSpec, events: &[Event]) -> String {
    events
        .iter()
        .map(|e| {
            let (px, py) = spec.to_pixel(*e);
            format!("{},{}", num(px), num(py))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canvas vertices of each reduction's clipped cone, boosted by `v`, in
/// trace order. Unbounded rays run to the edge of the window.
pub fn cone_polylines(trace: &RunTrace, v: f64, spec: &DiagramSpec) -> Result<Vec<Vec<(f64, f64)>>, DiagramError> {
    trace
        .reductions
        .iter()
        .map(|r| Ok(visible_cone(spec, r.clipped.vertex, r.clipped.left, r.clipped.right, v)?
            .iter()
            .map(|e| spec.to_pixel(*e))
            .collect()))
        .collect()
}

fn visible_cone(spec: &DiagramSpec, vertex: Event, left: RayEnd, right: RayEnd, v: f64) -> Result<Vec<Event>, DiagramError> {
    let apex = boost(vertex, v)?;
    let far = |end: RayEnd, dir: f64| -> Result<Event, GeometryError> {
        match end {
            RayEnd::Meets(e) => boost(e, v),
            RayEnd::Unbounded => {
                let l = reach(spec, apex);
                Ok(Event::new(apex.x + dir * l, apex.t - l))
            }
        }
    };
    let (l, r) = (far(left, -1.0)?, far(right, 1.0)?);
    let mut out = Vec::new();
    if let Some((a, b)) = clip_segment(spec, l, apex) {
        out.push(a);
        out.push(b);
    }
    if let Some((a, b)) = clip_segment(spec, apex, r) {
        if out.last() != Some(&a) {
            out.push(a);
        }
        out.push(b);
    }
    Ok(out)
}

/// Renders the trace in its own frame.
pub fn render(trace: &RunTrace, spec: &DiagramSpec) -> Result<String, DiagramError> {
    render_boosted(trace, 0.0, spec)
}

/// Renders the trace as seen from the frame moving with velocity `v`.
pub fn render_boosted(trace: &RunTrace, v: f64, spec: &DiagramSpec) -> Result<String, DiagramError> {
    spec.validate()?;
    boost(Event::new(0.0, 0.0), v)?;
    for (what, e) in key_events(trace, v)? {
        if !spec.contains(e) {
            return Err(DiagramError::WindowTooSmall { what, x: e.x, t: e.t });
        }
    }
    let st = &spec.style;
    let mut svg = String::new();
    let w = num(spec.width);
    let h = num(spec.height);
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        svg,
        "<style>.frame{{fill:#ffffff;stroke:#000000}} .axis{{stroke:#999999;stroke-dasharray:4 3}} \
         .worldline{{stroke:#000000;stroke-width:{sw}}} .device{{stroke-dasharray:6 3}} .product{{stroke:#555555}} \
         .cone{{fill:none;stroke:#000000;stroke-width:{sw}}} .window{{stroke:#3366cc;stroke-opacity:{wo};stroke-width:{ww}}} \
         .reduction{{fill:#000000}} .cutoff{{fill:#ffffff;stroke:#000000}} \
         text{{font-family:{ff};font-size:{fs}px}}</style>",
        sw = num(st.stroke_width),
        wo = num(st.window_opacity),
        ww = num(st.stroke_width * 5.0),
        ff = escape(&st.font_family),
        fs = num(st.font_size),
    );
    let _ = writeln!(svg, r#"<rect class="frame" x="0.000" y="0.000" width="{w}" height="{h}"/>"#);

    // later regions first so earlier, darker ones cover them
    let n = trace.reductions.len();
    let _ = writeln!(svg, r#"<g class="regions">"#);
    for (k, r) in trace.reductions.iter().enumerate().rev() {
        let apex = boost(r.vertex, v)?;
        let l = reach(spec, apex);
        let triangle = vec![
            apex,
            Event::new(apex.x + l, apex.t - l),
            Event::new(apex.x - l, apex.t - l),
        ];
        let poly = clip_polygon(spec, triangle);
        if poly.len() < 3 {
            continue;
        }
        let opacity = if n > 1 {
            st.shade_first + (st.shade_last - st.shade_first) * k as f64 / (n - 1) as f64
        } else {
            st.shade_first
        };
        let _ = writeln!(
            svg,
            r#"<polygon class="region" data-reduction="{}" fill="{}" points="{}"/>"#,
            escape(&r.label),
            gray(opacity),
            points(spec, &poly)
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="axes">"#);
    for (a, b) in [
        (Event::new(spec.x_range[0], 0.0), Event::new(spec.x_range[1], 0.0)),
        (Event::new(0.0, spec.t_range[0]), Event::new(0.0, spec.t_range[1])),
    ] {
        if let Some((a, b)) = clip_segment(spec, a, b) {
            let ((x1, y1), (x2, y2)) = (spec.to_pixel(a), spec.to_pixel(b));
            let _ = writeln!(
                svg,
                r#"<line class="axis" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                num(x1),
                num(y1),
                num(x2),
                num(y2)
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="windows">"#);
    for rec in &trace.windows {
        let (a, b) = (boost(rec.region[0], v)?, boost(rec.region[1], v)?);
        if a == b {
            continue;
        }
        if let Some((a, b)) = clip_segment(spec, a, b) {
            let ((x1, y1), (x2, y2)) = (spec.to_pixel(a), spec.to_pixel(b));
            let _ = writeln!(
                svg,
                r#"<line class="window" data-carrier="{}" data-epoch="{}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                escape(&rec.carrier),
                rec.epoch,
                num(x1),
                num(y1),
                num(x2),
                num(y2)
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="worldlines">"#);
    for tw in &trace.worldlines {
        let wl = tw.worldline.boosted(v)?;
        let end_t = wl.end_time.unwrap_or(spec.t_range[1]).min(spec.t_range[1]);
        if end_t <= wl.origin.t {
            continue;
        }
        let Some((a, b)) = clip_segment(spec, wl.origin, wl.event_at(end_t)) else {
            continue;
        };
        let role = match tw.role {
            Role::Particle => "particle",
            Role::Device => "device",
            Role::Source => "source",
            Role::Product => "product",
        };
        let ((x1, y1), (x2, y2)) = (spec.to_pixel(a), spec.to_pixel(b));
        let _ = writeln!(
            svg,
            r#"<line class="worldline {role}" data-name="{}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            escape(&tw.name),
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
        let (lx, ly) = if wl.end_time.is_some() { (x1, y1 - 4.0) } else { (x2, y2 + st.font_size) };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            num(lx + 4.0),
            num(ly.clamp(st.font_size, spec.height - 2.0)),
            escape(&tw.name)
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="cones">"#);
    for r in &trace.reductions {
        let line = visible_cone(spec, r.clipped.vertex, r.clipped.left, r.clipped.right, v)?;
        if line.len() < 2 {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="cone" data-reduction="{}" points="{}"/>"#,
            escape(&r.label),
            points(spec, &line)
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="events">"#);
    for (k, r) in trace.reductions.iter().enumerate() {
        let (px, py) = spec.to_pixel(boost(r.vertex, v)?);
        let _ = writeln!(
            svg,
            r#"<circle class="reduction" data-reduction="{}" cx="{}" cy="{}" r="{}"/>"#,
            escape(&r.label),
            num(px),
            num(py),
            num(st.marker_radius)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            num(px + 6.0),
            num(py - 6.0),
            escape(&r.label)
        );
        for c in &r.cutoffs {
            let later = trace.reductions[k + 1..]
                .iter()
                .find(|other| {
                    trace.worldline(&c.worldline).is_some_and(|w| {
                        (w.worldline.position_at(other.vertex.t) - other.vertex.x).abs() <= 1e-9
                    })
                })
                .map_or(&r.label, |other| &other.label);
            let (px, py) = spec.to_pixel(boost(c.event, v)?);
            let _ = writeln!(
                svg,
                r#"<circle class="cutoff" data-worldline="{}" cx="{}" cy="{}" r="{}"/>"#,
                escape(&c.worldline),
                num(px),
                num(py),
                num(st.marker_radius)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}">{}</text>"#,
                num(px + 6.0),
                num(py + 14.0),
                escape(&later.to_lowercase())
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    let frame = if v == 0.0 { "rest frame".to_string() } else { format!("frame v = {}", num(v)) };
    let fs = st.font_size;
    let lines = [
        format!("{} ({})", trace.name, frame),
        "filled: reduction, open: cutoff".to_string(),
        "worldlines are schematic".to_string(),
    ];
    let line_height = fs * 1.25;
    let box_height = line_height * lines.len() as f64 + 8.0;
    let box_width = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64 * fs * 0.6 + 12.0;
    let top = spec.height - box_height - 4.0;
    let _ = writeln!(svg, r#"<g class="legend">"#);
    let _ = writeln!(
        svg,
        r##"<rect x="4.000" y="{}" width="{}" height="{}" fill="#ffffff" fill-opacity="0.85" stroke="#999999"/>"##,
        num(top),
        num(box_width),
        num(box_height)
    );
    for (i, text) in lines.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="10.000" y="{}">{}</text>"#,
            num(top + 2.0 + line_height * (i as f64 + 1.0)),
            escape(text)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frontier;
    use crate::qrule::ReductionEvent;

    fn single(vertex: Event) -> RunTrace {
        let mut t = RunTrace::new("decay", "single", 0);
        let (clipped, frontier) = Frontier::new().insert(vertex).unwrap();
        t.reductions.push(ReductionEvent {
            label: "0".into(),
            vertex,
            component: "p1 p2".into(),
            conic_time: vertex.t,
            cutoffs: Vec::new(),
            shielded: Vec::new(),
            clipped,
        });
        t.frontier = frontier;
        t
    }

    #[test]
    fn empty_trace_draws_frame_and_axes() {
        let spec = DiagramSpec::new(800.0, 600.0, [-4.0, 4.0], [-1.0, 5.0]).unwrap();
        let svg = render(&RunTrace::new("decay", "empty", 0), &spec).unwrap();
        assert!(svg.contains(r#"class="frame""#));
        assert_eq!(svg.matches(r#"class="axis""#).count(), 2);
        assert!(!svg.contains("<polyline"));
        assert!(!svg.contains("<circle"));
    }

    #[test]
    fn vertex_maps_through_affine_transform() {
        let spec = DiagramSpec::new(1000.0, 500.0, [-5.0, 5.0], [0.0, 5.0]).unwrap();
        assert_eq!(spec.scale(), (100.0, 100.0));
        assert_eq!(spec.to_pixel(Event::new(0.0, 2.0)), (500.0, 300.0));
        let svg = render(&single(Event::new(0.0, 2.0)), &spec).unwrap();
        assert!(svg.contains(r#"cx="500.000" cy="300.000""#));
        // rays reach the bottom of the window at x = ±2
        assert!(svg.contains(r#"points="300.000,500.000 500.000,300.000 700.000,500.000""#));
    }

    #[test]
    fn transform_round_trips() {
        let spec = DiagramSpec::new(640.0, 480.0, [-3.0, 7.0], [1.0, 9.0]).unwrap();
        let e = Event::new(2.25, 4.5);
        let (px, py) = spec.to_pixel(e);
        let back = spec.to_world(px, py);
        assert!((back.x - e.x).abs() < 1e-12 && (back.t - e.t).abs() < 1e-12);
    }

    #[test]
    fn small_window_is_rejected() {
        let spec = DiagramSpec::new(800.0, 600.0, [-1.0, 1.0], [0.0, 1.0]).unwrap();
        assert!(matches!(
            render(&single(Event::new(0.0, 2.0)), &spec),
            Err(DiagramError::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn zero_boost_is_identical() {
        let t = single(Event::new(0.5, 2.0));
        let spec = DiagramSpec::fit(&t, 0.0).unwrap();
        assert_eq!(render(&t, &spec).unwrap(), render_boosted(&t, 0.0, &spec).unwrap());
    }

    #[test]
    fn luminal_boost_is_rejected() {
        let t = single(Event::new(0.5, 2.0));
        let spec = DiagramSpec::fit(&t, 0.0).unwrap();
        assert!(matches!(render_boosted(&t, 1.0, &spec), Err(DiagramError::Geometry(_))));
    }

    #[test]
    fn negative_zero_is_normalized() {
        assert_eq!(num(-0.0001), "0.000");
        assert_eq!(num(-1.5), "-1.500");
    }

    #[test]
    fn polygon_clip_keeps_inside_triangle() {
        let spec = DiagramSpec::new(100.0, 100.0, [-1.0, 1.0], [0.0, 2.0]).unwrap();
        let tri = vec![Event::new(0.0, 1.0), Event::new(0.5, 0.5), Event::new(-0.5, 0.5)];
        assert_eq!(clip_polygon(&spec, tri.clone()), tri);
        let big = vec![Event::new(0.0, 1.0), Event::new(5.0, -4.0), Event::new(-5.0, -4.0)];
        let out = clip_polygon(&spec, big);
        assert!(out.iter().all(|e| spec.contains(*e)));
        assert_eq!(out.len(), 5);
    }
}
