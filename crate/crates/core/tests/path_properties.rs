use excursion_lab::lamperti::{forward, inverse, reciprocal_integral};
use excursion_lab::paths::{
    concatenate, extract_first_long_excursion, occupation_integral, reflect, truncate_small_excursions, window,
    TestFunction,
};
use excursion_lab::rng::stream;
use excursion_lab::scaling::{rescale, unscale, ScaleKind};
use excursion_lab::{Excursion, Path, Segment};
use proptest::prelude::*;
use rand::Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * 1f64.max(a.abs()).max(b.abs())
}

/// Piecewise-affine path with jumps, slopes and finite end.
fn arb_path() -> impl Strategy<Value = Path> {
    prop::collection::vec((0.05f64..2.0, -4.0f64..4.0, prop_oneof![Just(0.0), -3.0f64..3.0]), 1..12).prop_map(
        |pieces| {
            let mut t = 0.0;
            let mut segs = Vec::new();
            for &(gap, v, slope) in &pieces {
                segs.push(Segment::new(t, v, slope));
                t += gap;
            }
            Path::new(segs, t).unwrap()
        },
    )
}

/// Step excursion with positive values, absorbed at 0.
fn arb_step_excursion() -> impl Strategy<Value = Excursion> {
    prop::collection::vec((0.05f64..2.0, 0.25f64..6.0), 1..10).prop_map(|steps| {
        let mut t = 0.0;
        let mut pts = Vec::new();
        for &(d, v) in &steps {
            pts.push((t, v));
            t += d;
        }
        pts.push((t, 0.0));
        Excursion::new(Path::from_steps(&pts, f64::INFINITY).unwrap()).unwrap()
    })
}

/// Left limits and values at every breakpoint of either path.
fn breakpoints(a: &Path, b: &Path) -> Vec<f64> {
    let mut ts: Vec<f64> = a.segments().iter().chain(b.segments()).map(|s| s.start).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

proptest! {
    #[test]
    fn reflection_is_a_minimal_regulator(f in arb_path()) {
        let r = reflect(&f);
        let ts = breakpoints(&f, &r);
        let push = |t: f64| r.value_at(t) - f.value_at(t);
        prop_assert!(close(push(0.0), (-f.initial_value()).max(0.0), 1e-12));
        let mut prev = push(0.0);
        for w in ts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            prop_assert!(r.value_at(t1) >= -1e-12 && r.left_limit(t1) >= -1e-12);
            let now = push(t1);
            prop_assert!(now >= prev - 1e-9, "regulator decreased at {t1}");
            if now > prev + 1e-9 {
                let touches = r.value_at(t0).abs() < 1e-9 || r.value_at(t1).abs() < 1e-9;
                prop_assert!(touches, "regulator grew on ({t0}, {t1}] away from 0");
            }
            prev = now;
        }
    }

    #[test]
    fn reflection_is_idempotent(f in arb_path()) {
        let r = reflect(&f);
        prop_assert!(reflect(&r).approx_eq(&r));
    }

    #[test]
    fn truncation_is_idempotent(f in arb_path(), eps in 0.01f64..1.0, shrink in 0.0f64..1.0) {
        let g = reflect(&f);
        let once = truncate_small_excursions(&g, eps).path;
        let twice = truncate_small_excursions(&once, eps * shrink).path;
        prop_assert!(twice.approx_eq(&once));
    }

    #[test]
    fn extracted_excursion_is_the_window(f in arb_path(), eps in 0.01f64..0.5) {
        let g = reflect(&f);
        if let Ok(tr) = extract_first_long_excursion(&g, eps) {
            prop_assert!(close(tr.d - tr.g, tr.excursion.lifetime(), 1e-9));
            prop_assert!(window(&g, tr.g, tr.d).unwrap().approx_eq(tr.excursion.path()));
        }
    }

    #[test]
    fn splice_rebuilds_the_path(f in arb_path(), u in 0.01f64..0.99) {
        let t = u * f.end();
        let head = window(&f, 0.0, t).unwrap();
        let tail = window(&f, t, f.end()).unwrap();
        prop_assert!(concatenate(&head, t, &tail).approx_eq(&f));
    }

    #[test]
    fn occupation_is_additive_and_linear(f in arb_path(), u in 0.0f64..1.0, c in -3.0f64..3.0, w in 0.1f64..2.0) {
        let phi = TestFunction::tent(1.0, w, 1.0);
        let psi = TestFunction::new(vec![(0.0, 0.5), (1.5, -1.0), (3.0, 2.0)]).unwrap();
        let end = f.end();
        let s = u * end;
        let whole = occupation_integral(&f, &phi, end);
        let parts = occupation_integral(&f, &phi, s) + occupation_integral(&window(&f, s, end).unwrap(), &phi, end - s);
        prop_assert!((whole - parts).abs() < 1e-9);
        let mixed: Vec<(f64, f64)> = {
            let mut xs: Vec<f64> = phi.knots().iter().chain(psi.knots()).map(|k| k.0).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs.into_iter().map(|a| (a, phi.value(a) + c * psi.value(a))).collect()
        };
        let combo = TestFunction::new(mixed).unwrap();
        let lhs = occupation_integral(&f, &combo, end);
        let rhs = whole + c * occupation_integral(&f, &psi, end);
        prop_assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn text_round_trip_is_bit_exact(f in arb_path()) {
        prop_assert_eq!(Path::from_text(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn rescaling_round_trips(f in arb_path(), n in 1.0f64..500.0) {
        for kind in [ScaleKind::Queue, ScaleKind::Cmj, ScaleKind::Levy] {
            prop_assert!(unscale(&rescale(&f, n, kind), n, kind).approx_eq(&f));
        }
    }

    #[test]
    fn lamperti_round_trips(e in arb_step_excursion()) {
        let h = inverse(&e).unwrap();
        prop_assert!(forward(&h).path().approx_eq(e.path()));
        prop_assert!(inverse(&forward(&e)).unwrap().path().approx_eq(e.path()));
    }

    #[test]
    fn lamperti_clock_identities(e in arb_step_excursion()) {
        prop_assert!(close(forward(&e).lifetime(), e.area(), 1e-12));
        prop_assert!(close(inverse(&e).unwrap().lifetime(), reciprocal_integral(&e), 1e-12));
        prop_assert_eq!(forward(&e).sup(), e.sup());
        prop_assert_eq!(inverse(&e).unwrap().sup(), e.sup());
    }
}

/// Continuous piecewise-linear excursion with values in `[1, 5]`, dropping to
/// 0 at its end.
fn affine_excursion(knots: &[(f64, f64)]) -> Excursion {
    let mut segs = Vec::new();
    for w in knots.windows(2) {
        segs.push(Segment::new(w[0].0, w[0].1, (w[1].1 - w[0].1) / (w[1].0 - w[0].0)));
    }
    segs.push(Segment::new(knots[knots.len() - 1].0, 0.0, 0.0));
    Excursion::new(Path::new(segs, f64::INFINITY).unwrap()).unwrap()
}

#[test]
fn lamperti_is_lipschitz_under_matched_perturbations() {
    // Calibrated on this corpus: the worst observed ratio is below 4.
    const K: f64 = 10.0;
    let mut rng = stream(7, "lamperti-continuity", 0);
    for case in 0..200 {
        let m = rng.random_range(2..10);
        let mut t = 0.0;
        let knots: Vec<(f64, f64)> = (0..=m)
            .map(|_| {
                let k = (t, rng.random_range(1.5..4.5));
                t += rng.random_range(0.1..1.0);
                k
            })
            .collect();
        let e = affine_excursion(&knots);
        for delta in [1e-2, 1e-3, 1e-4] {
            let moved: Vec<(f64, f64)> =
                knots.iter().map(|&(a, v)| (a, v + delta * rng.random_range(-1.0..1.0))).collect();
            let e2 = affine_excursion(&moved);
            prop_assert_close(&e, &e2, delta, K, case);
        }
    }
}

fn prop_assert_close(e: &Excursion, e2: &Excursion, delta: f64, k: f64, case: usize) {
    let (a, b) = (forward(e), forward(e2));
    let upto = a.lifetime().min(b.lifetime());
    // Stop just short of the earlier absorption so the drop to 0 is not compared.
    let d = a.path().sup_distance(b.path(), upto * (1.0 - 1e-12));
    assert!(d <= k * delta, "case {case}: distance {d} at delta {delta}");
}
