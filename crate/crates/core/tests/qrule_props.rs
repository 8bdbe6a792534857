use conic_collapse::geometry::{Event, Frontier};
use conic_collapse::qrule::{
    ComponentId, ComponentSpec, Factor, HitSchedule, InteractionWindow, QRuleEquation, QRuleError, WindowShape,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Plan {
    weights: Vec<f64>,
    starts: Vec<f64>,
    lengths: Vec<f64>,
    shapes: Vec<bool>,
}

fn plan() -> impl Strategy<Value = Plan> {
    (1usize..=4).prop_flat_map(|n| {
        (
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(0.0f64..5.0, n),
            prop::collection::vec(0.2f64..4.0, n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(raw, starts, lengths, shapes)| {
                let total: f64 = raw.iter().sum();
                Plan { weights: raw.iter().map(|w| w / total).collect(), starts, lengths, shapes }
            })
    })
}

fn setup(p: &Plan) -> (QRuleEquation, HitSchedule) {
    let mut eq = QRuleEquation::realized(0.0, ComponentSpec::new("s", vec![Factor::plain("s")]));
    let mut windows = Vec::new();
    for i in 0..p.weights.len() {
        let id = eq.add_ready(ComponentSpec::new(format!("r{i}"), vec![Factor::plain(format!("r{i}"))])).unwrap();
        let shape = if p.shapes[i] { WindowShape::RaisedCosine } else { WindowShape::Constant };
        windows.push(
            InteractionWindow::new(ComponentId(0), id, p.weights[i], p.starts[i], Some(p.starts[i] + p.lengths[i]), shape)
                .unwrap(),
        );
    }
    (eq, HitSchedule::new(windows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qvalue_is_conserved_while_evolving(p in plan(), steps in prop::collection::vec(0.01f64..1.5, 1..12)) {
        let (mut eq, schedule) = setup(&p);
        for dt in steps {
            eq.evolve(&schedule, dt).unwrap();
            prop_assert!((eq.total_qvalue() - 1.0).abs() <= 1e-9);
            prop_assert!(eq.components().iter().all(|c| c.qvalue >= 0.0));
        }
    }

    #[test]
    fn hit_time_inverts_cumulative_current(p in plan(), u in 0.0f64..0.999, v in 0.0f64..1.0) {
        let (_, schedule) = setup(&p);
        let hit = schedule.sample_hit(u, v).unwrap().unwrap();
        prop_assert!((schedule.cumulative(hit.time) - u).abs() <= 1e-9);
        prop_assert!(schedule.windows[hit.window].current(hit.time) > 0.0 || hit.time == schedule.windows[hit.window].t_on);
    }

    #[test]
    fn branch_marginals_follow_weights(p in plan()) {
        let (_, schedule) = setup(&p);
        let n = 200;
        let mut counts = vec![0usize; p.weights.len()];
        for i in 0..n {
            for j in 0..n {
                let u = (i as f64 + 0.5) / n as f64;
                let v = (j as f64 + 0.5) / n as f64;
                if let Some(hit) = schedule.sample_hit(u, v).unwrap() {
                    counts[hit.window] += 1;
                }
            }
        }
        for (c, w) in counts.iter().zip(&p.weights) {
            let f = *c as f64 / (n * n) as f64;
            prop_assert!((f - w).abs() < 0.01, "frequency {f} vs weight {w}");
        }
    }

    #[test]
    fn collapse_leaves_one_realized_component(p in plan(), u in 0.0f64..0.999, v in 0.0f64..1.0) {
        let (mut eq, schedule) = setup(&p);
        let hit = schedule.sample_hit(u, v).unwrap().unwrap();
        eq.evolve_to(&schedule, hit.time).unwrap();
        prop_assert!((eq.total_qvalue() - 1.0).abs() <= 1e-9);
        let c = eq.collapse(hit.target, hit.time, Event::new(0.0, hit.time), "A", &Frontier::new(), &[]).unwrap();
        prop_assert_eq!(c.equation.components().len(), 1);
        prop_assert!((c.equation.total_qvalue() - 1.0).abs() <= 1e-12);
        prop_assert!(eq.is_consumed());
    }
}

#[test]
fn consumed_equation_rejects_every_mutation() {
    let p = Plan { weights: vec![1.0], starts: vec![0.0], lengths: vec![1.0], shapes: vec![false] };
    let (mut eq, schedule) = setup(&p);
    eq.evolve_to(&schedule, 0.5).unwrap();
    eq.collapse(ComponentId(1), 0.5, Event::new(0.0, 0.5), "A", &Frontier::new(), &[]).unwrap();
    assert_eq!(eq.evolve(&schedule, 0.1), Err(QRuleError::Consumed));
    assert_eq!(eq.add_ready(ComponentSpec::new("x", vec![])), Err(QRuleError::Consumed));
    let again = eq.collapse(ComponentId(1), 0.6, Event::new(0.0, 0.6), "B", &Frontier::new(), &[]);
    assert_eq!(again.unwrap_err(), QRuleError::Consumed);
}
