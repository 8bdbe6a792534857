use conic_collapse::geometry::{boost, cone_time, on_cone, Event, Frontier};
use proptest::prelude::*;

fn brute_force(vertices: &[Event], x: f64) -> f64 {
    vertices.iter().map(|v| v.t - (x - v.x).abs()).fold(f64::NEG_INFINITY, f64::max)
}

/// Inserts in order, skipping vertices below the current envelope.
fn build(vertices: &[Event]) -> (Frontier, Vec<Event>) {
    let mut f = Frontier::new();
    let mut kept = Vec::new();
    for &v in vertices {
        if let Ok((_, next)) = f.insert(v) {
            f = next;
            kept.push(v);
        }
    }
    (f, kept)
}

fn vertex() -> impl Strategy<Value = Event> {
    (-10.0f64..10.0, 0.0f64..10.0).prop_map(|(x, t)| Event::new(x, t))
}

fn samples() -> impl Iterator<Item = f64> {
    (0..1000).map(|i| -25.0 + 50.0 * i as f64 / 999.0)
}

proptest! {
    #[test]
    fn envelope_matches_brute_force(vs in prop::collection::vec(vertex(), 1..=8)) {
        let (f, kept) = build(&vs);
        for x in samples() {
            let expected = brute_force(&kept, x);
            prop_assert!((f.eval(x).unwrap() - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn slopes_stay_lightlike(vs in prop::collection::vec(vertex(), 1..=8)) {
        let mut f = Frontier::new();
        for v in vs {
            if let Ok((_, next)) = f.insert(v) {
                f = next;
                prop_assert!(f.slopes_are_lightlike());
            }
        }
    }

    #[test]
    fn insert_is_monotone(vs in prop::collection::vec(vertex(), 1..=8), extra in vertex()) {
        let (f, _) = build(&vs);
        if let Ok((_, g)) = f.insert(extra) {
            for x in samples() {
                prop_assert!(g.eval(x).unwrap() >= f.eval(x).unwrap());
            }
        }
    }

    #[test]
    fn final_envelope_is_order_independent(
        vs in prop::collection::vec(
            // spacelike-separated vertices are admissible in every order
            (0usize..8).prop_map(|i| i),
            1..=8
        ),
        heights in prop::collection::vec(0.0f64..1.9, 8),
        seed in any::<u64>(),
    ) {
        let mut xs: Vec<usize> = vs;
        xs.sort_unstable();
        xs.dedup();
        let points: Vec<Event> = xs.iter().map(|&i| Event::new(2.0 * i as f64, heights[i])).collect();
        let mut shuffled = points.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let (a, ka) = build(&points);
        let (b, kb) = build(&shuffled);
        prop_assert_eq!(ka.len(), points.len());
        prop_assert_eq!(kb.len(), points.len());
        prop_assert_eq!(a.vertices(), b.vertices());
        prop_assert_eq!(a.breakpoints(), b.breakpoints());
    }

    #[test]
    fn boost_preserves_interval(x in -50.0f64..50.0, t in -50.0f64..50.0, v in -0.99f64..0.99) {
        let e = Event::new(x, t);
        let b = boost(e, v).unwrap();
        let s0 = t * t - x * x;
        let s1 = b.t * b.t - b.x * b.x;
        prop_assert!((s1 - s0).abs() <= 1e-9 * (1.0 + x * x + t * t));
        let back = boost(b, -v).unwrap();
        prop_assert!((back.x - x).abs() <= 1e-9 * (1.0 + x.abs() + t.abs()));
        prop_assert!((back.t - t).abs() <= 1e-9 * (1.0 + x.abs() + t.abs()));
    }

    #[test]
    fn conic_simultaneity_is_boost_covariant(
        vx in -10.0f64..10.0, vt in -10.0f64..10.0, dx in -10.0f64..10.0, v in -0.95f64..0.95,
    ) {
        let vertex = Event::new(vx, vt);
        let e = Event::new(vx + dx, cone_time(vertex, vx + dx));
        prop_assert!(on_cone(vertex, e));
        prop_assert!(on_cone(boost(vertex, v).unwrap(), boost(e, v).unwrap()));
    }
}
