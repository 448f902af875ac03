//! Binary homogeneous CMJ processes: each living individual gives birth at
//! Poisson rate λ and dies when its life length runs out. Simulated exactly
//! through the set of residual life lengths.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

use crate::distributions::{DistError, ServiceDist};
use crate::paths::{Path, PathBuilder};

#[derive(Debug, Error, PartialEq)]
pub enum CmjError {
    #[error("initial residual life lengths must be positive (got {0})")]
    NonPositiveResidual(f64),
    #[error("stationary start needs load below 1 (got {0})")]
    Unstable(f64),
    #[error("invalid argument: {0}")]
    Arg(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Initial population description.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Given residual life lengths.
    Residuals(Vec<f64>),
    /// One individual with a fresh life length `S`.
    SingleS,
    /// `ζ` individuals with i.i.d. forward recurrence residuals `S*`.
    ZetaStar(usize),
    /// Geometric(ρ) number of individuals with i.i.d. `S*` residuals.
    NuStar,
    /// `ζ` individuals with fresh life lengths `S` (not `S*`).
    ZetaFresh(usize),
}

/// Residual life lengths drawn for an initial condition.
///
/// `rho` is only read by [`InitialCondition::NuStar`].
pub fn make_initial<R: Rng + ?Sized>(
    init: &InitialCondition,
    life: &ServiceDist,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<f64>, CmjError> {
    Ok(match init {
        InitialCondition::Residuals(r) => {
            if let Some(&bad) = r.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
                return Err(CmjError::NonPositiveResidual(bad));
            }
            r.clone()
        }
        InitialCondition::SingleS => vec![life.sample(rng)],
        InitialCondition::ZetaFresh(z) => (0..*z).map(|_| life.sample(rng)).collect(),
        InitialCondition::ZetaStar(z) => {
            let star = life.forward_recurrence()?;
            (0..*z).map(|_| star.sample(rng)).collect()
        }
        InitialCondition::NuStar => {
            let k = sample_geometric(rho, rng)?;
            let star = life.forward_recurrence()?;
            (0..k).map(|_| star.sample(rng)).collect()
        }
    })
}

/// `K` with `P(K = k) = (1 - ρ) ρ^k`, `k >= 0`.
pub fn sample_geometric<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> Result<usize, CmjError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(CmjError::Unstable(rho));
    }
    if rho == 0.0 {
        return Ok(0);
    }
    // Inversion: K = floor(ln U / ln ρ).
    let u: f64 = 1.0 - rng.random::<f64>();
    Ok((u.ln() / rho.ln()).floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Birth,
    Death,
}

/// Result of [`simulate_cmj`].
#[derive(Debug, Clone, PartialEq)]
pub struct CmjTrace {
    /// Population size, frozen at 0 after extinction.
    pub population: Path,
    pub initial_size: usize,
    pub birth_times: Vec<f64>,
    /// One entry per individual, equal death times repeated.
    pub death_times: Vec<f64>,
    pub total_progeny: usize,
    pub extinct: bool,
    /// Extinction time, or the horizon for unfinished runs.
    pub end_time: f64,
}

impl CmjTrace {
    /// `∫ z` up to the end of the run.
    pub fn area(&self) -> f64 {
        self.population.integral_to(self.end_time)
    }

    /// Event log rows `(time, kind, population_after)` in time order, deaths
    /// first on ties.
    pub fn events(&self) -> Vec<(f64, EventKind, usize)> {
        let mut ev: Vec<(f64, EventKind)> = self
            .birth_times
            .iter()
            .map(|&t| (t, EventKind::Birth))
            .chain(self.death_times.iter().map(|&t| (t, EventKind::Death)))
            .collect();
        ev.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| (a.1 == EventKind::Birth).cmp(&(b.1 == EventKind::Birth)))
        });
        let mut z = self.initial_size;
        ev.into_iter()
            .map(|(t, k)| {
                match k {
                    EventKind::Birth => z += 1,
                    EventKind::Death => z -= 1,
                }
                (t, k, z)
            })
            .collect()
    }

    /// CSV event log `time,type,population_after`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,type,population_after\n");
        for (t, k, z) in self.events() {
            let kind = match k {
                EventKind::Birth => "birth",
                EventKind::Death => "death",
            };
            let _ = writeln!(out, "{t},{kind},{z}");
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}
impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Runs until extinction or `horizon`, from explicit initial residuals.
pub fn simulate_cmj_from<R: Rng + ?Sized>(
    lambda: f64,
    life: &ServiceDist,
    residuals: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<CmjTrace, CmjError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CmjError::Arg(format!("lambda {lambda}")));
    }
    if !(horizon > 0.0) {
        return Err(CmjError::Arg(format!("horizon {horizon}")));
    }
    let mut deaths: BinaryHeap<Reverse<Time>> =
        residuals.iter().map(|&r| Reverse(Time(r))).collect();
    let mut pop = PathBuilder::new();
    let mut births = Vec::new();
    let mut death_times = Vec::with_capacity(residuals.len());
    let mut t = 0.0;
    pop.push(0.0, deaths.len() as f64, 0.0);
    loop {
        let z = deaths.len();
        if z == 0 {
            return Ok(CmjTrace {
                population: pop.finish(f64::INFINITY),
                initial_size: residuals.len(),
                total_progeny: residuals.len() + births.len(),
                birth_times: births,
                death_times,
                extinct: true,
                end_time: t,
            });
        }
        let next_death = deaths.peek().expect("nonempty").0 .0;
        let birth_at = if lambda > 0.0 {
            let e: f64 = Exp1.sample(rng);
            t + e / (lambda * z as f64)
        } else {
            f64::INFINITY
        };
        let next = next_death.min(birth_at);
        if next >= horizon {
            return Ok(CmjTrace {
                population: pop.finish(horizon),
                initial_size: residuals.len(),
                total_progeny: residuals.len() + births.len(),
                birth_times: births,
                death_times,
                extinct: false,
                end_time: horizon,
            });
        }
        t = next;
        if next_death <= birth_at {
            while deaths.peek().is_some_and(|d| d.0 .0 == next_death) {
                deaths.pop();
                death_times.push(t);
            }
        } else {
            births.push(t);
            deaths.push(Reverse(Time(t + life.sample(rng))));
        }
        pop.push(t, deaths.len() as f64, 0.0);
    }
}

/// Draws the initial condition, then runs [`simulate_cmj_from`].
pub fn simulate_cmj<R: Rng + ?Sized>(
    lambda: f64,
    life: &ServiceDist,
    init: &InitialCondition,
    horizon: f64,
    rng: &mut R,
) -> Result<CmjTrace, CmjError> {
    let residuals = make_initial(init, life, lambda * life.mean(), rng)?;
    simulate_cmj_from(lambda, life, &residuals, horizon, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn pure_death() {
        let life = ServiceDist::exponential(1.0).unwrap();
        let tr = simulate_cmj(
            0.0,
            &life,
            &InitialCondition::Residuals(vec![2.0, 1.0]),
            f64::INFINITY,
            &mut stream(0, "t", 0),
        )
        .unwrap();
        let want = Path::from_steps(&[(0.0, 2.0), (1.0, 1.0), (2.0, 0.0)], f64::INFINITY).unwrap();
        assert!(tr.population.approx_eq(&want));
        assert!(tr.extinct);
        assert_eq!(tr.total_progeny, 2);
        assert_eq!(tr.death_times, vec![1.0, 2.0]);
        assert_eq!(
            tr.to_csv(),
            "time,type,population_after\n1,death,1\n2,death,0\n"
        );
    }

    #[test]
    fn equal_residuals_die_together() {
        let life = ServiceDist::exponential(1.0).unwrap();
        let tr = simulate_cmj_from(0.0, &life, &[1.0, 1.0, 3.0], f64::INFINITY, &mut stream(0, "t", 0)).unwrap();
        assert_eq!(tr.population.segments().len(), 3);
        assert_eq!(tr.population.value_at(1.0), 1.0);
    }

    #[test]
    fn geometric_pmf() {
        let mut rng = stream(5, "geom", 0);
        let n = 200_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let k = sample_geometric(0.8, &mut rng).unwrap();
            if k < 4 {
                counts[k] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = 0.2 * 0.8f64.powi(k as i32);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 4.0 * se, "k={k}");
        }
        assert!((0.2 * 0.8f64.powi(3) - 0.1024).abs() < 1e-15);
        assert!(sample_geometric(1.0, &mut rng).is_err());
    }

    #[test]
    fn zeta_star_start_size() {
        let life = ServiceDist::uniform(0.5, 1.5).unwrap();
        let r = make_initial(&InitialCondition::ZetaStar(3), &life, 0.0, &mut stream(0, "t", 0)).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|&x| x > 0.0 && x <= 1.5));
    }

    #[test]
    fn rejects_bad_residuals() {
        let life = ServiceDist::exponential(1.0).unwrap();
        assert!(matches!(
            make_initial(&InitialCondition::Residuals(vec![1.0, 0.0]), &life, 0.0, &mut stream(0, "t", 0)),
            Err(CmjError::NonPositiveResidual(_))
        ));
    }

    #[test]
    fn horizon_flags_partial_runs() {
        let life = ServiceDist::exponential(1.0).unwrap();
        let tr = simulate_cmj(0.0, &life, &InitialCondition::Residuals(vec![5.0]), 2.0, &mut stream(0, "t", 0)).unwrap();
        assert!(!tr.extinct);
        assert_eq!(tr.end_time, 2.0);
        assert_eq!(tr.area(), 2.0);
    }
}
