use excursion_lab::cmj::{simulate_cmj, EventKind, InitialCondition};
use excursion_lab::rng::stream;
use excursion_lab::verify::stats::{chi_square_gof, ks_one_sample, mean, std_error, KS_COEFFICIENT};
use excursion_lab::ServiceDist;
use proptest::prelude::*;

/// Expected total progeny of a linear birth-death chain from one individual,
/// by first-step analysis: each individual first gives birth (probability `p`)
/// or dies, and a birth leaves two independent copies of the problem.
fn progeny_by_first_step(lambda: f64, mu: f64) -> f64 {
    let p = lambda / (lambda + mu);
    // Future births `b` solve `b = p (1 + 2b)`; iterate from 0.
    let mut b = 0.0;
    for _ in 0..10_000 {
        b = p * (1.0 + 2.0 * b);
    }
    1.0 + b
}

#[test]
fn mean_total_progeny_matches_first_step_oracle() {
    let oracle = progeny_by_first_step(0.5, 1.0);
    assert!((oracle - 2.0).abs() < 1e-9);
    let s = ServiceDist::exponential(1.0).unwrap();
    let sizes: Vec<f64> = (0..100_000)
        .map(|i| {
            let tr = simulate_cmj(0.5, &s, &InitialCondition::SingleS, f64::INFINITY, &mut stream(21, "progeny", i))
                .unwrap();
            assert!(tr.extinct);
            tr.total_progeny as f64
        })
        .collect();
    let (m, se) = (mean(&sizes), std_error(&sizes));
    assert!((m - oracle).abs() < 4.0 * se, "mean progeny {m} ± {se}");
}

#[test]
fn exponential_lifetimes_give_a_birth_death_jump_chain() {
    let (lambda, mu) = (0.7, 1.0);
    let s = ServiceDist::exponential(1.0 / mu).unwrap();
    let (mut births, mut deaths) = (0u64, 0u64);
    let mut i = 0;
    while births + deaths < 100_000 {
        let tr = simulate_cmj(lambda, &s, &InitialCondition::ZetaStar(5), 50.0, &mut stream(22, "bd", i)).unwrap();
        i += 1;
        for (_, kind, _) in tr.events() {
            match kind {
                EventKind::Birth => births += 1,
                EventKind::Death => deaths += 1,
            }
        }
    }
    let p = lambda / (lambda + mu);
    let c = chi_square_gof(&[births, deaths], &[p, 1.0 - p], 5.0).unwrap();
    assert!(c.statistic < c.quantile(0.999), "chi-square {}", c.statistic);
}

#[test]
fn zeta_star_residuals_follow_the_forward_recurrence_law() {
    let s = ServiceDist::uniform(0.0, 2.0).unwrap();
    let star = s.forward_recurrence().unwrap();
    let first_deaths: Vec<f64> = (0..4000)
        .map(|i| {
            let tr = simulate_cmj(0.0, &s, &InitialCondition::ZetaStar(1), f64::INFINITY, &mut stream(23, "zs", i))
                .unwrap();
            tr.end_time
        })
        .collect();
    let d = ks_one_sample(&first_deaths, |x| star.cdf(x)).unwrap();
    assert!(d < KS_COEFFICIENT / 4000f64.sqrt(), "KS {d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn population_moves_by_unit_steps_and_is_absorbed(seed in any::<u64>(), zeta in 1usize..20, lambda in 0.2f64..1.2) {
        let s = ServiceDist::uniform(0.2, 1.4).unwrap();
        let tr = simulate_cmj(lambda, &s, &InitialCondition::ZetaStar(zeta), 40.0, &mut stream(seed, "unit", 0)).unwrap();
        let segs = tr.population.segments();
        prop_assert_eq!(segs[0].value, zeta as f64);
        for w in segs.windows(2) {
            prop_assert_eq!((w[1].value - w[0].value).abs(), 1.0);
            prop_assert!(w[1].value >= 0.0);
        }
        prop_assert!(segs.iter().all(|g| g.slope == 0.0));
        prop_assert_eq!(tr.total_progeny, zeta + tr.birth_times.len());
        if tr.extinct {
            prop_assert_eq!(tr.population.value_at(tr.end_time), 0.0);
            prop_assert_eq!(tr.population.value_at(tr.end_time + 100.0), 0.0);
            prop_assert_eq!(tr.death_times.len(), tr.total_progeny);
        }
    }
}
