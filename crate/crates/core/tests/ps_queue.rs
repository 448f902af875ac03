use excursion_lab::cmj::InitialCondition;
use excursion_lab::paths::{reflect, PathBuilder};
use excursion_lab::psq::{simulate_ps, simulate_ps_from, split_busy_cycles, PsStop};
use excursion_lab::rng::stream;
use excursion_lab::verify::stats::{ks_one_sample, mean, std_error, KS_COEFFICIENT};
use excursion_lab::ServiceDist;
use proptest::prelude::*;

#[test]
fn idle_gaps_are_exponential() {
    let lambda = 0.8;
    let s = ServiceDist::uniform(0.25, 1.25).unwrap();
    let tr = simulate_ps_from(
        lambda,
        &s,
        &[],
        PsStop::BusyPeriods {
            count: 10_001,
            max_time: 1e9,
        },
        &mut stream(31, "idle", 0),
    )
    .unwrap();
    let idle: Vec<f64> = split_busy_cycles(&tr).unwrap().iter().filter_map(|c| c.idle).collect();
    assert!(idle.len() >= 10_000);
    let d = ks_one_sample(&idle, |x| -(-lambda * x).exp_m1()).unwrap();
    assert!(d < KS_COEFFICIENT / (idle.len() as f64).sqrt(), "KS {d}");
}

#[test]
fn stationary_departure_count_has_poisson_mean() {
    let (lambda, t) = (1.0, 20.0);
    let s = ServiceDist::exponential(0.8).unwrap();
    let counts: Vec<f64> = (0..4000)
        .map(|i| {
            let tr = simulate_ps(lambda, &s, &InitialCondition::NuStar, PsStop::Horizon(t), &mut stream(32, "dep", i))
                .unwrap();
            tr.departure_times().len() as f64
        })
        .collect();
    let (m, se) = (mean(&counts), std_error(&counts));
    assert!((m - lambda * t).abs() < 4.0 * se, "mean {m} ± {se}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn workload_is_the_reflected_net_input(seed in any::<u64>(), k in 0usize..5, lambda in 0.3f64..1.5) {
        let s = ServiceDist::two_point(0.3, 1.7, 0.5).unwrap();
        let mut rng = stream(seed, "net-input", 0);
        let initial: Vec<f64> = (0..k).map(|i| 0.5 + i as f64 * 0.37).collect();
        let h = 60.0;
        let tr = simulate_ps_from(lambda, &s, &initial, PsStop::Horizon(h), &mut rng).unwrap();
        let mut net = PathBuilder::new();
        let mut level: f64 = initial.iter().sum();
        net.push(0.0, level, -1.0);
        for (&a, &x) in tr.arrival_times.iter().zip(&tr.arrival_sizes) {
            level += x;
            net.push(a, level - a, -1.0);
        }
        let w = reflect(&net.finish(h));
        prop_assert!(w.sup_distance(&tr.workload, h) < 1e-9 * (1.0 + level));
    }

    #[test]
    fn queue_and_workload_empty_together(seed in any::<u64>(), lambda in 0.3f64..0.95) {
        let s = ServiceDist::uniform(0.0, 2.0).unwrap();
        let tr = simulate_ps(lambda, &s, &InitialCondition::NuStar, PsStop::Horizon(80.0), &mut stream(seed, "wc", 0))
            .unwrap();
        for g in tr.queue_length.segments() {
            let q = g.value;
            let w = tr.workload.value_at(g.start);
            prop_assert!(q >= 0.0 && q.fract() == 0.0);
            prop_assert!(w >= -1e-9);
            prop_assert_eq!(q == 0.0, w.abs() <= 1e-9, "q {} w {} at {}", q, w, g.start);
        }
        // Each departure is one customer leaving.
        prop_assert_eq!(
            tr.initial.len() + tr.arrival_times.len() - tr.departure_times.len(),
            tr.queue_length.segments().last().unwrap().value as usize
        );
    }
}
