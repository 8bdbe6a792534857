//! Simulator of collapse along backward light cones in 1+1 Minkowski space.
//!
//! * [`geometry`]: events, worldlines, boosts, and the non-penetration frontier.
//! * [`conic_wave`]: conic wave functions and their free propagation.
//! * [`qrule`]: qRule equations, probability current, hits and collapse.
//! * [`diagram`]: SVG Minkowski diagrams of run traces.
//! * [`scenarios`]: configured runs, traces, invariants and Monte Carlo statistics.
//! * [`cli`]: the `conic-collapse` command line.

pub mod cli;
pub mod conic_wave;
pub mod diagram;
pub mod geometry;
pub mod qrule;
pub mod scenarios;
