//! Free flight of each carrier's conic wave up to its first interaction.

use super::{Scenario, ScenarioConfig};
use crate::conic_wave::{gaussian_packet, Grid, WaveError};
use crate::geometry::Event;
use serde::{Deserialize, Serialize};

/// Longest flight propagated for a carrier at rest.
const MAX_REST_FLIGHT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeFlight {
    pub carrier: String,
    pub velocity: f64,
    pub duration: f64,
    /// Total qvalue after the flight.
    pub qvalue: f64,
    /// Drift of the mean position divided by the flight time.
    pub measured_velocity: f64,
    pub spread: f64,
}

fn flights(config: &ScenarioConfig) -> Vec<(String, Event, f64, f64)> {
    match &config.scenario {
        Scenario::Decay(d) => {
            vec![("pc".into(), Event::new(d.position, d.start_time), 0.0, (1.0 / d.rate).min(MAX_REST_FLIGHT))]
        }
        Scenario::Epr(e) | Scenario::EprBoosted(e) => (0..2)
            .map(|i| (format!("p{}", i + 1), e.emission, e.velocities[i], e.segment(i).0 - e.emission.t))
            .collect(),
        Scenario::Independent(ind) => ind
            .nuclei
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let origin = Event::new(n.position, ind.start_time);
                (format!("n{}", k + 1), origin, 0.0, (1.0 / n.rate).min(MAX_REST_FLIGHT))
            })
            .collect(),
    }
}

/// Propagates a Gaussian packet with the configured width and momentum
/// m·v/ħ along every carrier's flight, checking resolution and norm.
pub fn ground_free_flight(config: &ScenarioConfig) -> Result<Vec<FreeFlight>, WaveError> {
    let g = config.grid;
    flights(config)
        .into_iter()
        .map(|(carrier, origin, velocity, duration)| {
            let spread_end = g.sigma0 * (1.0 + (g.hbar * duration / (2.0 * g.mass * g.sigma0 * g.sigma0)).powi(2)).sqrt();
            let drift = velocity * duration;
            let lo = origin.x + drift.min(0.0) - 10.0 * spread_end;
            let hi = origin.x + drift.max(0.0) + 10.0 * spread_end;
            let pad = 0.1 * (hi - lo);
            let grid = Grid::spanning(lo - pad, hi + pad, g.spacing)?;
            let k = g.mass * velocity / g.hbar;
            let wave = gaussian_packet(origin.x, g.sigma0, k, grid)?
                .with_constants(g.hbar, g.mass)
                .with_vertex(origin, velocity);
            let steps = (duration / wave.default_time_step()).ceil().max(1.0) as usize;
            let out = wave.propagate(duration / steps as f64, steps)?;
            Ok(FreeFlight {
                carrier,
                velocity,
                duration,
                qvalue: out.qvalue(),
                measured_velocity: (out.mean_position() - wave.mean_position()) / duration,
                spread: out.spread(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;

    #[test]
    fn epr_carriers_fly_at_their_velocities() {
        let flights = ground_free_flight(&builtin("fig1_epr").unwrap()).unwrap();
        assert_eq!(flights.len(), 2);
        for f in flights {
            assert!((f.qvalue - 1.0).abs() < 1e-8);
            assert!((f.measured_velocity - f.velocity).abs() < 1e-2, "{f:?}");
        }
    }

    #[test]
    fn coarse_grid_is_unresolved() {
        let mut config = builtin("decay").unwrap();
        config.grid.spacing = 2.0;
        assert!(matches!(ground_free_flight(&config), Err(WaveError::UnresolvedWave(_))));
    }
}
