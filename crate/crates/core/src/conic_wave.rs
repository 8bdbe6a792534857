//! Conic wave functions ξ(r, t) on the backward cone of a vertex and their
//! free dynamics `-iħ ∂ₜξ = (ħ²/2m) ∂²ᵣξ`, stepped with the Cayley
//! (Crank–Nicolson) form so that the norm is conserved to round-off.

use crate::geometry::Event;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use thiserror::Error;

/// Fraction of each grid end that the wave must stay clear of.
pub const EDGE_FRACTION: f64 = 0.05;
/// Largest probability mass tolerated inside the edge bands, relative to the norm.
pub const EDGE_MASS_TOL: f64 = 1e-8;
/// Largest relative norm change tolerated by `propagate`.
pub const NORM_DRIFT_TOL: f64 = 1e-6;
/// Minimum samples per shortest de Broglie wavelength.
pub const POINTS_PER_WAVELENGTH: f64 = 8.0;
/// Largest spectral power fraction tolerated above the resolvable wavenumber.
pub const SPECTRAL_TAIL_TOL: f64 = 1e-6;

const EDGE_CHECK_EVERY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("norm drifted by {relative:e} (relative) during propagation")]
    NormDrift { relative: f64 },
    #[error("wave is not resolved by the grid: {0}")]
    UnresolvedWave(String),
    #[error("invalid wave parameter: {0}")]
    InvalidParameter(String),
}

/// Uniform signed sampling of the cone coordinate r (or a slice coordinate x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub spacing: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(start: f64, spacing: f64, len: usize) -> Result<Self, WaveError> {
        if !(spacing > 0.0 && spacing.is_finite() && start.is_finite()) || len < 3 {
            return Err(WaveError::GridMismatch(format!(
                "need finite start, positive spacing and at least 3 points (got start {start}, spacing {spacing}, len {len})"
            )));
        }
        Ok(Self { start, spacing, len })
    }

    /// Grid covering `[lo, hi]` with the given spacing.
    pub fn spanning(lo: f64, hi: f64, spacing: f64) -> Result<Self, WaveError> {
        if hi.is_nan() || lo.is_nan() || hi <= lo {
            return Err(WaveError::GridMismatch(format!("empty span [{lo}, {hi}]")));
        }
        let len = ((hi - lo) / spacing).ceil() as usize + 1;
        Self::new(lo, spacing, len)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.spacing
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn width(&self) -> f64 {
        self.end() - self.start
    }
}

/// ψ(x) on a horizontal slice t = `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceWave {
    pub time: f64,
    pub grid: Grid,
    pub amplitudes: Vec<Complex64>,
}

impl SliceWave {
    pub fn new(time: f64, grid: Grid, amplitudes: Vec<Complex64>) -> Result<Self, WaveError> {
        if amplitudes.len() != grid.len {
            return Err(WaveError::GridMismatch(format!(
                "{} amplitudes for {} grid points",
                amplitudes.len(),
                grid.len
            )));
        }
        Ok(Self { time, grid, amplitudes })
    }

    pub fn norm(&self) -> f64 {
        norm_of(&self.amplitudes, self.grid.spacing)
    }
}

/// ξ(r) on the backward cone of `vertex`; r is the signed horizontal offset
/// from the vertex, negative across the vertex on the other ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicWave {
    pub vertex: Event,
    /// Velocity of the world line that successive vertices follow.
    pub vertex_velocity: f64,
    pub grid: Grid,
    pub amplitudes: Vec<Complex64>,
    pub hbar: f64,
    pub mass: f64,
}

fn norm_of(amplitudes: &[Complex64], spacing: f64) -> f64 {
    amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * spacing
}

/// Projects a slice wave onto the backward cone of `vertex` using its natural
/// grid `r = x - vertex.x`.
pub fn map_to_cone(psi: &SliceWave, vertex: Event) -> Result<ConicWave, WaveError> {
    let grid = Grid::new(psi.grid.start - vertex.x, psi.grid.spacing, psi.grid.len)?;
    map_to_cone_on(psi, vertex, grid)
}

/// Projects a slice wave onto a caller-chosen cone grid. The grid must share
/// the slice spacing, be aligned with it, and hold every non-zero sample.
pub fn map_to_cone_on(psi: &SliceWave, vertex: Event, grid: Grid) -> Result<ConicWave, WaveError> {
    if (vertex.t - psi.time).abs() > 1e-12 * (1.0 + psi.time.abs()) {
        return Err(WaveError::GridMismatch(format!(
            "vertex time {} differs from slice time {}",
            vertex.t, psi.time
        )));
    }
    let spacing = psi.grid.spacing;
    if (grid.spacing - spacing).abs() > 1e-12 * spacing {
        return Err(WaveError::GridMismatch(format!(
            "cone spacing {} differs from slice spacing {}",
            grid.spacing, spacing
        )));
    }
    // x - x₁ = r - r₁: sample i of the slice lands at r = x_i - vertex.x
    let offset = (psi.grid.start - vertex.x - grid.start) / spacing;
    let shift = offset.round();
    if (offset - shift).abs() > 1e-9 {
        return Err(WaveError::GridMismatch("cone grid is not aligned with the slice".into()));
    }
    let shift = shift as i64;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); grid.len];
    for (i, &a) in psi.amplitudes.iter().enumerate() {
        let j = i as i64 + shift;
        if j >= 0 && (j as usize) < grid.len {
            amplitudes[j as usize] = a;
        } else if a != Complex64::new(0.0, 0.0) {
            return Err(WaveError::GridMismatch(format!(
                "slice sample at x = {} falls outside the cone grid",
                psi.grid.point(i)
            )));
        }
    }
    Ok(ConicWave {
        vertex,
        vertex_velocity: 0.0,
        grid,
        amplitudes,
        hbar: 1.0,
        mass: 1.0,
    })
}

/// Normalized Gaussian `exp(-(r-c)²/4σ₀²) e^{ikr}`: |ξ|² has standard deviation σ₀.
pub fn gaussian_packet(
    center: f64,
    sigma0: f64,
    momentum: f64,
    grid: Grid,
) -> Result<ConicWave, WaveError> {
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(WaveError::InvalidParameter(format!("sigma0 must be positive, got {sigma0}")));
    }
    if grid.width() < 8.0 * sigma0
        || center - 4.0 * sigma0 < grid.start
        || center + 4.0 * sigma0 > grid.end()
    {
        return Err(WaveError::GridMismatch(format!(
            "grid [{}, {}] cannot hold a packet at {center} with sigma {sigma0}",
            grid.start,
            grid.end()
        )));
    }
    let mut amplitudes: Vec<Complex64> = (0..grid.len)
        .map(|i| {
            let r = grid.point(i);
            let envelope = (-(r - center).powi(2) / (4.0 * sigma0 * sigma0)).exp();
            Complex64::from_polar(envelope, momentum * r)
        })
        .collect();
    let scale = norm_of(&amplitudes, grid.spacing).sqrt().recip();
    amplitudes.iter_mut().for_each(|a| *a *= scale);
    Ok(ConicWave {
        vertex: Event::new(0.0, 0.0),
        vertex_velocity: 0.0,
        grid,
        amplitudes,
        hbar: 1.0,
        mass: 1.0,
    })
}

impl ConicWave {
    pub fn with_vertex(mut self, vertex: Event, vertex_velocity: f64) -> Self {
        self.vertex = vertex;
        self.vertex_velocity = vertex_velocity;
        self
    }

    pub fn with_constants(mut self, hbar: f64, mass: f64) -> Self {
        self.hbar = hbar;
        self.mass = mass;
        self
    }

    /// Σ|ξ|²Δr.
    pub fn qvalue(&self) -> f64 {
        norm_of(&self.amplitudes, self.grid.spacing)
    }

    pub fn scaled(&self, factor: Complex64) -> ConicWave {
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|a| *a *= factor);
        out
    }

    /// Mean of r under |ξ|².
    pub fn mean_position(&self) -> f64 {
        let n = self.qvalue();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| self.grid.point(i) * a.norm_sqr())
            .sum::<f64>()
            * self.grid.spacing
            / n
    }

    /// Standard deviation of r under |ξ|².
    pub fn spread(&self) -> f64 {
        let n = self.qvalue();
        let mean = self.mean_position();
        let var = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| (self.grid.point(i) - mean).powi(2) * a.norm_sqr())
            .sum::<f64>()
            * self.grid.spacing
            / n;
        var.sqrt()
    }

    fn spectrum(&self) -> Vec<(f64, f64)> {
        let n = self.amplitudes.len();
        let mut buffer = self.amplitudes.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
        let dk = 2.0 * PI / (n as f64 * self.grid.spacing);
        buffer
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let signed = if j <= (n - 1) / 2 { j as f64 } else { j as f64 - n as f64 };
                (signed * dk, c.norm_sqr())
            })
            .collect()
    }

    /// Mean wavenumber of the discrete spectral density.
    pub fn mean_wavenumber(&self) -> f64 {
        let spectrum = self.spectrum();
        let total: f64 = spectrum.iter().map(|(_, p)| p).sum();
        spectrum.iter().map(|(k, p)| k * p).sum::<f64>() / total
    }

    /// Rejects waves with spectral power beyond the resolvable wavenumber.
    pub fn check_resolved(&self) -> Result<(), WaveError> {
        let k_limit = 2.0 * PI / (POINTS_PER_WAVELENGTH * self.grid.spacing);
        let spectrum = self.spectrum();
        let total: f64 = spectrum.iter().map(|(_, p)| p).sum();
        if total == 0.0 {
            return Ok(());
        }
        let tail: f64 = spectrum.iter().filter(|(k, _)| k.abs() > k_limit).map(|(_, p)| p).sum();
        if tail / total > SPECTRAL_TAIL_TOL {
            return Err(WaveError::UnresolvedWave(format!(
                "{:.3e} of the spectral power lies above k = {k_limit:.3}",
                tail / total
            )));
        }
        Ok(())
    }

    /// Rejects waves with appreciable weight near the hard walls.
    pub fn check_clear_of_edges(&self) -> Result<(), WaveError> {
        let band = ((self.grid.len as f64) * EDGE_FRACTION).ceil() as usize;
        let total = self.qvalue();
        if total == 0.0 {
            return Ok(());
        }
        let n = self.amplitudes.len();
        let edge: f64 = self.amplitudes[..band]
            .iter()
            .chain(&self.amplitudes[n - band..])
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            * self.grid.spacing;
        if edge / total > EDGE_MASS_TOL {
            return Err(WaveError::UnresolvedWave(format!(
                "{:.3e} of the norm reached the outer {}% of the grid",
                edge / total,
                EDGE_FRACTION * 100.0
            )));
        }
        Ok(())
    }

    /// Default step 0.25·Δr²·m/ħ.
    pub fn default_time_step(&self) -> f64 {
        0.25 * self.grid.spacing * self.grid.spacing * self.mass / self.hbar
    }

    /// Advances the wave by `n_steps` steps of size `dt`, moving the vertex
    /// along its world line.
    pub fn propagate(&self, dt: f64, n_steps: usize) -> Result<ConicWave, WaveError> {
        if n_steps == 0 {
            return Ok(self.clone());
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(WaveError::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        self.check_resolved()?;
        self.check_clear_of_edges()?;
        let propagator = Propagator::new(self.grid, dt, self.hbar, self.mass);
        let n0 = self.qvalue();
        let mut out = self.clone();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for step in 1..=n_steps {
            propagator.step(&mut out.amplitudes, &mut scratch);
            if step % EDGE_CHECK_EVERY == 0 {
                out.check_clear_of_edges()?;
            }
        }
        out.check_clear_of_edges()?;
        if n0 > 0.0 {
            let relative = (out.qvalue() - n0).abs() / n0;
            if relative > NORM_DRIFT_TOL {
                return Err(WaveError::NormDrift { relative });
            }
        }
        let elapsed = dt * n_steps as f64;
        out.vertex = Event::new(
            self.vertex.x + self.vertex_velocity * elapsed,
            self.vertex.t + elapsed,
        );
        Ok(out)
    }
}

/// Pre-factored Cayley step `(1 + iΔtH/2ħ) ξ' = (1 - iΔtH/2ħ) ξ` with
/// Dirichlet walls. The tridiagonal system has constant coefficients, so the
/// forward-elimination factors are computed once.
pub struct Propagator {
    alpha: Complex64,
    diag_a: Complex64,
    c_prime: Vec<Complex64>,
    inv_denom: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: Grid, dt: f64, hbar: f64, mass: f64) -> Self {
        let alpha = Complex64::new(0.0, dt * hbar / (4.0 * mass * grid.spacing * grid.spacing));
        let diag_a = Complex64::new(1.0, 0.0) + 2.0 * alpha;
        let off = -alpha;
        let n = grid.len;
        let mut c_prime = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_denom = vec![Complex64::new(0.0, 0.0); n];
        let mut prev_c = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let denom = diag_a - off * prev_c;
            inv_denom[i] = denom.inv();
            prev_c = off * inv_denom[i];
            c_prime[i] = prev_c;
        }
        Self { alpha, diag_a, c_prime, inv_denom }
    }

    pub fn step(&self, psi: &mut [Complex64], rhs: &mut [Complex64]) {
        let n = psi.len();
        let diag_b = Complex64::new(2.0, 0.0) - self.diag_a;
        let alpha = self.alpha;
        let off = -alpha;
        let zero = Complex64::new(0.0, 0.0);
        for (i, r) in rhs.iter_mut().enumerate().take(n) {
            let left = if i > 0 { psi[i - 1] } else { zero };
            let right = if i + 1 < n { psi[i + 1] } else { zero };
            *r = diag_b * psi[i] + alpha * (left + right);
        }
        // forward sweep
        let mut prev = zero;
        for (r, inv) in rhs.iter_mut().zip(&self.inv_denom).take(n) {
            prev = (*r - off * prev) * inv;
            *r = prev;
        }
        // back substitution
        psi[n - 1] = rhs[n - 1];
        for i in (0..n - 1).rev() {
            psi[i] = rhs[i] - self.c_prime[i] * psi[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, dr: f64) -> Grid {
        Grid::spanning(lo, hi, dr).unwrap()
    }

    #[test]
    fn map_copies_support_under_shift() {
        let g = grid(-1.0, 5.0, 0.05);
        let amps: Vec<Complex64> = (0..g.len)
            .map(|i| {
                let x = g.point(i);
                if (1.0..=3.0).contains(&x) {
                    Complex64::new((x - 1.0) * (3.0 - x), 0.1)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let psi = SliceWave::new(0.0, g, amps).unwrap();
        let xi = map_to_cone(&psi, Event::new(0.0, 0.0)).unwrap();
        for i in 0..g.len {
            assert_eq!(xi.grid.point(i), g.point(i));
            assert_eq!(xi.amplitudes[i], psi.amplitudes[i]);
        }
        assert_eq!(xi.qvalue(), psi.norm());
    }

    #[test]
    fn map_extends_over_the_vertex() {
        let g = grid(-2.0, 2.0, 0.1);
        let amps = vec![Complex64::new(1.0, 0.0); g.len];
        let psi = SliceWave::new(1.5, g, amps).unwrap();
        let xi = map_to_cone(&psi, Event::new(0.5, 1.5)).unwrap();
        assert!((xi.grid.start + 2.5).abs() < 1e-12);
        assert!(xi.grid.start < 0.0);
        assert!((xi.qvalue() - psi.norm()).abs() <= 1e-12);
    }

    #[test]
    fn map_onto_too_small_grid_fails() {
        let g = grid(0.0, 4.0, 0.1);
        let psi = SliceWave::new(0.0, g, vec![Complex64::new(1.0, 0.0); g.len]).unwrap();
        let small = Grid::new(0.0, 0.1, 10).unwrap();
        let err = map_to_cone_on(&psi, Event::new(0.0, 0.0), small).unwrap_err();
        assert!(matches!(err, WaveError::GridMismatch(_)));
        let wrong_time = map_to_cone(&psi, Event::new(0.0, 1.0)).unwrap_err();
        assert!(matches!(wrong_time, WaveError::GridMismatch(_)));
    }

    #[test]
    fn qvalue_examples() {
        let w = gaussian_packet(0.0, 1.0, 0.0, grid(-10.0, 10.0, 0.05)).unwrap();
        assert!((w.qvalue() - 1.0).abs() <= 1e-9);
        assert!((w.scaled(Complex64::new(0.5, 0.0)).qvalue() - 0.25).abs() <= 1e-9);
        assert_eq!(w.scaled(Complex64::new(0.0, 0.0)).qvalue(), 0.0);
    }

    #[test]
    fn packet_moments() {
        let w = gaussian_packet(1.5, 1.0, 0.0, grid(-10.0, 12.0, 0.05)).unwrap();
        assert!((w.mean_position() - 1.5).abs() <= 1e-9);
        assert!((w.spread() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn packet_rejects_narrow_grid() {
        let err = gaussian_packet(0.0, 1.0, 0.0, grid(-3.0, 3.0, 0.05)).unwrap_err();
        assert!(matches!(err, WaveError::GridMismatch(_)));
        assert!(gaussian_packet(0.0, -1.0, 0.0, grid(-3.0, 3.0, 0.05)).is_err());
    }

    #[test]
    fn zero_steps_is_identity() {
        let w = gaussian_packet(0.0, 1.0, 0.5, grid(-10.0, 10.0, 0.05)).unwrap();
        assert_eq!(w.propagate(0.01, 0).unwrap(), w);
    }

    #[test]
    fn vertex_follows_world_line() {
        let w = gaussian_packet(0.0, 1.0, 0.0, grid(-15.0, 15.0, 0.05))
            .unwrap()
            .with_vertex(Event::new(1.0, 2.0), 0.5);
        let out = w.propagate(0.01, 100).unwrap();
        assert!((out.vertex.t - 3.0).abs() < 1e-12);
        assert!((out.vertex.x - 1.5).abs() < 1e-12);
    }

    #[test]
    fn packet_hitting_the_wall_is_unresolved() {
        let w = gaussian_packet(5.0, 0.5, 3.0, grid(-8.0, 8.0, 0.05)).unwrap();
        let err = w.propagate(0.01, 400).unwrap_err();
        assert!(matches!(err, WaveError::UnresolvedWave(_)));
    }

    #[test]
    fn undersampled_momentum_is_unresolved() {
        // k = 20 needs Δr ≤ 2π/(8·20) ≈ 0.039
        let w = gaussian_packet(0.0, 1.0, 20.0, grid(-10.0, 10.0, 0.1)).unwrap();
        let err = w.propagate(0.001, 1).unwrap_err();
        assert!(matches!(err, WaveError::UnresolvedWave(_)));
    }
}
