//! C ABI over the simulator core.
//!
//! Every entry point returns a [`CcStatus`]; on failure the message is
//! available from [`cc_last_error`] on the same thread. Handles are opaque
//! and owned by the caller. Strings returned through `char **` must be
//! released with [`cc_string_free`].

use conic_collapse::diagram::{render_boosted, DiagramError, DiagramSpec};
use conic_collapse::geometry::{
    boost, cone_intersect_worldline, cone_time, Event, Frontier, GeometryError, Worldline,
};
use conic_collapse::qrule::{ComponentId, ComponentSpec, Factor, QRuleEquation, QRuleError};
use conic_collapse::scenarios::{builtin, check_trace, run, RunTrace, ScenarioConfig, ScenarioError};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidVelocity = 2,
    NoIntersection = 3,
    CausalViolation = 4,
    Consumed = 5,
    NotReady = 6,
    InvalidArgument = 7,
    Config = 8,
    Numerical = 9,
    Serialization = 10,
    Panic = 11,
}

/// An event `(x, t)` in units with c = 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcEvent {
    pub x: f64,
    pub t: f64,
}

impl From<CcEvent> for Event {
    fn from(e: CcEvent) -> Self {
        Event::new(e.x, e.t)
    }
}

impl From<Event> for CcEvent {
    fn from(e: Event) -> Self {
        CcEvent { x: e.x, t: e.t }
    }
}

/// Upper envelope of inserted backward cones.
pub struct CcFrontier(Frontier);

/// A qRule equation. A collapse consumes it; only `cc_equation_free` and
/// read-only queries remain valid afterwards.
pub struct CcEquation(QRuleEquation);

struct Failure(CcStatus, String);

type Outcome = Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Outcome) -> CcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CcStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("panic inside conic-collapse");
            CcStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(CcStatus::InvalidArgument, message.into())
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        let status = match e {
            GeometryError::InvalidVelocity(_) => CcStatus::InvalidVelocity,
            GeometryError::NoIntersection { .. } => CcStatus::NoIntersection,
            GeometryError::CausalViolation { .. } => CcStatus::CausalViolation,
            GeometryError::NonFinite => CcStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<QRuleError> for Failure {
    fn from(e: QRuleError) -> Self {
        match e {
            QRuleError::Geometry(g) => g.into(),
            QRuleError::Consumed => Failure(CcStatus::Consumed, e.to_string()),
            QRuleError::NotReady(_) => Failure(CcStatus::NotReady, e.to_string()),
            QRuleError::NegativeQvalue { .. } => Failure(CcStatus::Numerical, e.to_string()),
            other => invalid(other.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(_) => Failure(CcStatus::Config, e.to_string()),
            ScenarioError::QRule(q) => q.into(),
            ScenarioError::Geometry(g) => g.into(),
            ScenarioError::Wave(_) => Failure(CcStatus::Numerical, e.to_string()),
            ScenarioError::Invariant(_) => Failure(CcStatus::CausalViolation, e.to_string()),
        }
    }
}

impl From<DiagramError> for Failure {
    fn from(e: DiagramError) -> Self {
        match e {
            DiagramError::Geometry(g) => g.into(),
            other => invalid(other.to_string()),
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Outcome {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> Outcome {
    let owned = CString::new(s).map_err(|_| Failure(CcStatus::Serialization, "interior NUL".into()))?;
    write(out, owned.into_raw(), "out")
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn cc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Lorentz boost of `e` into the frame moving with velocity `v`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cc_boost(e: CcEvent, v: f64, out: *mut CcEvent) -> CcStatus {
    guard(|| write(out, boost(e.into(), v)?.into(), "out"))
}

/// Time of the backward cone of `vertex` at position `x`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cc_cone_time(vertex: CcEvent, x: f64, out: *mut f64) -> CcStatus {
    guard(|| {
        if !(vertex.x.is_finite() && vertex.t.is_finite() && x.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        write(out, cone_time(vertex.into(), x), "out")
    })
}

/// Where the backward cone of `vertex` crosses the unbounded worldline
/// through `origin` with velocity `velocity`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cc_cone_intersect_worldline(
    vertex: CcEvent,
    origin: CcEvent,
    velocity: f64,
    out: *mut CcEvent,
) -> CcStatus {
    guard(|| {
        let w = Worldline::new(origin.into(), velocity)?;
        write(out, cone_intersect_worldline(vertex.into(), &w)?.into(), "out")
    })
}

/// Empty frontier. Release with `cc_frontier_free`.
#[no_mangle]
pub extern "C" fn cc_frontier_new() -> *mut CcFrontier {
    Box::into_raw(Box::new(CcFrontier(Frontier::new())))
}

/// # Safety
/// `f` must be null or a handle from `cc_frontier_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_frontier_free(f: *mut CcFrontier) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Inserts a reduction vertex. Fails with `CausalViolation` and leaves the
/// frontier unchanged when the vertex lies below it.
///
/// # Safety
/// `f` must be null or a live frontier handle.
#[no_mangle]
pub unsafe extern "C" fn cc_frontier_insert(f: *mut CcFrontier, vertex: CcEvent) -> CcStatus {
    guard(|| {
        let f = f.as_mut().ok_or_else(|| null("frontier"))?;
        let (_, next) = f.0.insert(vertex.into())?;
        f.0 = next;
        Ok(())
    })
}

/// Frontier time at `x`. An empty frontier is `InvalidArgument`.
///
/// # Safety
/// `f` must be null or a live frontier handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn cc_frontier_eval(f: *const CcFrontier, x: f64, out: *mut f64) -> CcStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("frontier"))?;
        let t = f.0.eval(x).ok_or_else(|| invalid("frontier is empty"))?;
        write(out, t, "out")
    })
}

/// Copies up to `cap` breakpoints into `buf` and stores the total count in
/// `len`. Pass `buf = NULL, cap = 0` to query the count.
///
/// # Safety
/// `f` must be a live frontier handle; `buf` valid for `cap` writes; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_frontier_breakpoints(
    f: *const CcFrontier,
    buf: *mut CcEvent,
    cap: usize,
    len: *mut usize,
) -> CcStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("frontier"))?;
        let points = f.0.breakpoints();
        if cap > 0 && buf.is_null() {
            return Err(null("buf"));
        }
        for (i, p) in points.iter().take(cap).enumerate() {
            buf.add(i).write((*p).into());
        }
        write(len, points.len(), "len")
    })
}

/// New equation with one realized component labelled `label`.
///
/// # Safety
/// `label` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_equation_realized(
    clock: f64,
    label: *const c_char,
    out: *mut *mut CcEquation,
) -> CcStatus {
    guard(|| {
        let label = text(label, "label")?;
        if !clock.is_finite() {
            return Err(invalid("clock must be finite"));
        }
        let eq = QRuleEquation::realized(clock, ComponentSpec::new(label, vec![Factor::plain(label)]));
        write(out, Box::into_raw(Box::new(CcEquation(eq))), "out")
    })
}

/// # Safety
/// `eq` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_equation_free(eq: *mut CcEquation) {
    if !eq.is_null() {
        drop(Box::from_raw(eq));
    }
}

/// Adds a ready component with qvalue 0 and returns its id.
///
/// # Safety
/// `eq` must be a live handle; `label` NUL-terminated; `out_id` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_equation_add_ready(
    eq: *mut CcEquation,
    label: *const c_char,
    out_id: *mut u32,
) -> CcStatus {
    guard(|| {
        let eq = eq.as_mut().ok_or_else(|| null("equation"))?;
        let label = text(label, "label")?;
        let id = eq.0.add_ready(ComponentSpec::new(label, vec![Factor::plain(label)]))?;
        write(out_id, id.0, "out_id")
    })
}

/// Collapses onto ready component `branch` at conic time `t_hit` with
/// reduction `vertex`. The old handle is consumed; the successor is written
/// to `out`. When `frontier` is non-null the vertex is inserted into it.
///
/// # Safety
/// `eq` must be a live handle; `frontier` null or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_equation_collapse(
    eq: *mut CcEquation,
    branch: u32,
    t_hit: f64,
    vertex: CcEvent,
    frontier: *mut CcFrontier,
    out: *mut *mut CcEquation,
) -> CcStatus {
    guard(|| {
        let eq = eq.as_mut().ok_or_else(|| null("equation"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let empty = Frontier::new();
        let prior = frontier.as_ref().map_or(&empty, |f| &f.0);
        let c = eq.0.collapse(ComponentId(branch), t_hit, vertex.into(), "reduction", prior, &[])?;
        if let Some(f) = frontier.as_mut() {
            f.0 = c.frontier;
        }
        write(out, Box::into_raw(Box::new(CcEquation(c.equation))), "out")
    })
}

/// Sum of qvalues over all components.
///
/// # Safety
/// `eq` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_equation_total_qvalue(eq: *const CcEquation, out: *mut f64) -> CcStatus {
    guard(|| {
        let eq = eq.as_ref().ok_or_else(|| null("equation"))?;
        write(out, eq.0.total_qvalue(), "out")
    })
}

/// Runs one scenario and returns its trace as JSON. `config` is either a
/// built-in name or a configuration document.
///
/// # Safety
/// `config` must be NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_run_scenario_json(
    config: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> CcStatus {
    guard(|| {
        let source = text(config, "config")?;
        let config = match builtin(source) {
            Some(c) => c,
            None => ScenarioConfig::from_json(source).map_err(|e| Failure(CcStatus::Config, e.to_string()))?,
        };
        let trace = run(&config, seed)?;
        let problems = check_trace(&trace);
        if !problems.is_empty() {
            return Err(ScenarioError::Invariant(problems.join("; ")).into());
        }
        give_string(out_json, trace.to_json())
    })
}

/// Renders a trace as SVG in the frame moving with velocity `boost`.
///
/// # Safety
/// `trace_json` must be NUL-terminated; `out_svg` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_render_svg(
    trace_json: *const c_char,
    boost: f64,
    out_svg: *mut *mut c_char,
) -> CcStatus {
    guard(|| {
        let trace = RunTrace::from_json(text(trace_json, "trace_json")?)
            .map_err(|e| Failure(CcStatus::Serialization, e.to_string()))?;
        let spec = DiagramSpec::fit(&trace, boost)?;
        give_string(out_svg, render_boosted(&trace, boost, &spec)?)
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer returned through a `char **` out
/// parameter of this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
