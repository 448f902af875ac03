//! Spectrally positive compound Poisson paths with drift -1, their exact
//! local times (visit counts), and the stopping rules and conditioned
//! samplers built on them.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::distributions::ServiceDist;
use crate::paths::{Path, PathBuilder, PathError};

#[derive(Debug, Error, PartialEq)]
pub enum LevyError {
    #[error("load lambda * E S = {0} must be below 1 for this stopping rule")]
    Unstable(f64),
    #[error("invalid argument: {0}")]
    Arg(String),
    #[error("segment {index} has slope {slope}; local times need drift -1 paths")]
    NotUnitDrift { index: usize, slope: f64 },
    #[error("no accepted sample after {attempts} attempts")]
    SamplingFailed { attempts: usize },
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// First passage to 0.
    FirstPassage,
    /// Run on `[0, t)`.
    Horizon(f64),
    /// Stop at the m-th visit to 0; a start at 0 is the first visit.
    VisitsToZero(usize),
}

/// A simulated path. Stopped paths are frozen at their stopping value with
/// an infinite end; horizon paths end at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyRun {
    pub path: Path,
    pub stop_time: f64,
    pub jumps: usize,
    /// First passage requested from a nonpositive start: zero-length run.
    pub degenerate: bool,
    /// Visits-to-zero run abandoned because the path drifted so far below 0
    /// that returning has probability below [`ESCAPE_PROBABILITY`].
    pub escaped: bool,
}

/// Return probability below which a path under 0 is declared gone.
pub const ESCAPE_PROBABILITY: f64 = 1e-12;

/// Default attempt budget for the rejection samplers.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1_000_000;

/// Adjustment coefficient: the positive root of `λ(E e^{θS} - 1) = θ`.
///
/// `P(sup_{t} x_t >= 0 | x_0 = -y) <= e^{-γ y}`, so a path more than
/// `ln(1/p)/γ` below 0 returns with probability at most `p`. Infinite when
/// `λ = 0`.
pub fn adjustment_coefficient(lambda: f64, s: &ServiceDist) -> f64 {
    if lambda == 0.0 {
        return f64::INFINITY;
    }
    let f = |th: f64| lambda * (s.mgf(th) - 1.0) - th;
    let mut hi = 1.0 / s.mean();
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    // `f` is convex with `f(0) = 0` and `f'(0) = ρ - 1 < 0`: shrink `lo` off
    // the trivial root.
    let mut probe = hi;
    while probe > 1e-300 {
        probe *= 0.5;
        if f(probe) < 0.0 {
            lo = probe;
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn load(lambda: f64, s: &ServiceDist) -> f64 {
    lambda * s.mean()
}

/// Event-driven simulation from `x0`: slope -1 between Exp(λ) jump epochs,
/// jumps drawn from `s`.
pub fn simulate_levy<R: Rng + ?Sized>(
    lambda: f64,
    s: &ServiceDist,
    x0: f64,
    stop: Stop,
    rng: &mut R,
) -> Result<LevyRun, LevyError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LevyError::Arg(format!("lambda {lambda}")));
    }
    if !x0.is_finite() {
        return Err(LevyError::Arg(format!("x0 {x0}")));
    }
    let rho = load(lambda, s);
    if !matches!(stop, Stop::Horizon(_)) && rho >= 1.0 {
        return Err(LevyError::Unstable(rho));
    }
    let gaps = (lambda > 0.0).then(|| Exp::new(lambda).expect("positive rate"));
    let next_gap = |rng: &mut R| gaps.as_ref().map_or(f64::INFINITY, |g| g.sample(rng));

    match stop {
        Stop::FirstPassage => {
            if x0 <= 0.0 {
                return Ok(LevyRun {
                    path: Path::constant(x0, f64::INFINITY),
                    stop_time: 0.0,
                    jumps: 0,
                    degenerate: true,
                    escaped: false,
                });
            }
            let mut b = PathBuilder::new();
            let (mut t, mut x, mut jumps) = (0.0, x0, 0);
            b.push(0.0, x0, -1.0);
            loop {
                let gap = next_gap(rng);
                if x <= gap {
                    t += x;
                    b.push(t, 0.0, 0.0);
                    return Ok(LevyRun {
                        path: b.finish(f64::INFINITY),
                        stop_time: t,
                        jumps,
                        degenerate: false,
                        escaped: false,
                    });
                }
                t += gap;
                x += s.sample(rng) - gap;
                jumps += 1;
                b.push(t, x, -1.0);
            }
        }
        Stop::Horizon(h) => {
            if !(h > 0.0) {
                return Err(LevyError::Arg(format!("horizon {h}")));
            }
            let mut b = PathBuilder::new();
            let (mut t, mut x, mut jumps) = (0.0, x0, 0);
            b.push(0.0, x0, -1.0);
            loop {
                let gap = next_gap(rng);
                if t + gap >= h {
                    return Ok(LevyRun {
                        path: b.finish(h),
                        stop_time: h,
                        jumps,
                        degenerate: false,
                        escaped: false,
                    });
                }
                t += gap;
                x += s.sample(rng) - gap;
                jumps += 1;
                b.push(t, x, -1.0);
            }
        }
        Stop::VisitsToZero(m) => {
            if m == 0 {
                return Err(LevyError::Arg("visit count must be at least 1".into()));
            }
            if x0 < 0.0 {
                return Err(LevyError::Arg(format!("visits-to-zero start {x0} is below 0")));
            }
            let cutoff = ESCAPE_PROBABILITY.recip().ln() / adjustment_coefficient(lambda, s);
            let mut b = PathBuilder::new();
            let (mut t, mut x, mut jumps, mut visits) = (0.0, x0, 0, 0);
            b.push(0.0, x0, -1.0);
            loop {
                let gap = next_gap(rng);
                // This descending piece attains (x - gap, x].
                if x >= 0.0 && x - gap < 0.0 {
                    visits += 1;
                    if visits == m {
                        t += x;
                        b.push(t, 0.0, 0.0);
                        return Ok(LevyRun {
                            path: b.finish(f64::INFINITY),
                            stop_time: t,
                            jumps,
                            degenerate: false,
                            escaped: false,
                        });
                    }
                }
                let low = x - gap;
                if low < -cutoff {
                    let t_esc = t + x + cutoff;
                    b.push(t_esc, -cutoff, 0.0);
                    return Ok(LevyRun {
                        path: b.finish(f64::INFINITY),
                        stop_time: t_esc,
                        jumps,
                        degenerate: false,
                        escaped: true,
                    });
                }
                t += gap;
                x = low + s.sample(rng);
                jumps += 1;
                b.push(t, x, -1.0);
            }
        }
    }
}

/// Exact number of times the drift -1 path takes the value `a` on `[0, upto)`.
pub fn visits_to_level(x: &Path, a: f64, upto: f64) -> Result<usize, LevyError> {
    let mut count = 0;
    for (i, s) in x.segments().iter().enumerate() {
        if s.start >= upto {
            break;
        }
        if s.slope != -1.0 {
            return Err(LevyError::NotUnitDrift {
                index: i,
                slope: s.slope,
            });
        }
        // The piece reaches `a` at `start + (value - a)`; compare times, not
        // values, so a stop exactly at the visit is not counted.
        if s.value >= a && s.start + (s.value - a) < x.segment_end(i).min(upto) {
            count += 1;
        }
    }
    Ok(count)
}

/// Step function `a ↦ ℓ(a)` on levels `a > 0`, constant on `(levels[i], levels[i+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeProfile {
    /// `0 = a_0 < a_1 < ... < a_k`; the profile vanishes above `a_k`.
    pub levels: Vec<f64>,
    /// `values[i]` holds on `(levels[i], levels[i+1]]`; `values.len() = levels.len() - 1`.
    pub values: Vec<f64>,
}

impl LocalTimeProfile {
    pub fn zero() -> Self {
        Self {
            levels: vec![0.0],
            values: vec![],
        }
    }

    /// Value at level `a > 0`.
    pub fn at(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return self.values.first().copied().unwrap_or(0.0);
        }
        let i = self.levels.partition_point(|&l| l < a);
        if i == 0 || i > self.values.len() {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    /// `∫ ℓ(a) da`.
    pub fn total(&self) -> f64 {
        self.values
            .iter()
            .zip(self.levels.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }

    /// `∫ φ(a) ℓ(a) da`.
    pub fn pair(&self, phi: &crate::paths::TestFunction) -> f64 {
        self.values
            .iter()
            .zip(self.levels.windows(2))
            .map(|(v, w)| v * phi.integral(w[0], w[1]))
            .sum()
    }

    /// Highest level with positive local time.
    pub fn top(&self) -> f64 {
        self.values
            .iter()
            .rposition(|&v| v > 0.0)
            .map_or(0.0, |i| self.levels[i + 1])
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Maps `(a, ℓ)` to `(a / level_div, ℓ / value_div)`.
    pub fn rescaled(&self, level_div: f64, value_div: f64) -> Self {
        Self {
            levels: self.levels.iter().map(|a| a / level_div).collect(),
            values: self.values.iter().map(|v| v / value_div).collect(),
        }
    }

    /// The profile read as a step path with levels as time.
    pub fn as_path(&self) -> Path {
        let mut b = PathBuilder::new();
        b.push(0.0, self.values.first().copied().unwrap_or(0.0), 0.0);
        for (i, v) in self.values.iter().enumerate().skip(1) {
            b.push(self.levels[i], *v, 0.0);
        }
        if let Some(&top) = self.levels.last() {
            if top > 0.0 {
                b.push(top, 0.0, 0.0);
            }
        }
        b.finish(f64::INFINITY).merged()
    }

    /// `ltp v1` header, then `a_i value_i` lines, the last level with value 0.
    pub fn to_text(&self) -> String {
        let mut out = String::from("ltp v1\n");
        for (i, a) in self.levels.iter().enumerate() {
            let v = self.values.get(i).copied().unwrap_or(0.0);
            let _ = writeln!(out, "{a} {v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LevyError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("ltp v1") {
            return Err(LevyError::Arg("missing `ltp v1` header".into()));
        }
        let mut levels = Vec::new();
        let mut values = Vec::new();
        for l in lines {
            let mut it = l.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(v)), None) => {
                    levels.push(a);
                    values.push(v);
                }
                _ => return Err(LevyError::Arg(format!("bad profile line {l:?}"))),
            }
        }
        values.pop();
        if levels.first() != Some(&0.0) || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LevyError::Arg("profile levels must start at 0 and increase".into()));
        }
        Ok(Self { levels, values })
    }
}

// Left limits within this of 0 are rounding residue of a first-passage stop.
const SNAP: f64 = 1e-12;

/// Exact local time on levels `a > 0` of a drift -1 path over `[0, upto)`:
/// each descending piece from `v0` to left limit `v1` adds 1 on `(max(v1, 0), v0]`.
pub fn local_time_profile(x: &Path, upto: f64) -> Result<LocalTimeProfile, LevyError> {
    let mut events: Vec<(f64, i64)> = Vec::new();
    for (i, s) in x.segments().iter().enumerate() {
        if s.start >= upto {
            break;
        }
        if s.slope != -1.0 {
            return Err(LevyError::NotUnitDrift {
                index: i,
                slope: s.slope,
            });
        }
        let e = x.segment_end(i).min(upto);
        let mut lo = s.eval(e).max(0.0);
        if lo <= SNAP * s.value.max(1.0) {
            lo = 0.0;
        }
        if s.value > lo {
            events.push((lo, 1));
            events.push((s.value, -1));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut levels = vec![0.0];
    let mut values = Vec::new();
    let mut count = 0i64;
    let mut k = 0;
    while k < events.len() {
        let a = events[k].0;
        if a > *levels.last().expect("nonempty") {
            levels.push(a);
            values.push(count as f64);
        }
        while k < events.len() && events[k].0 == a {
            count += events[k].1;
            k += 1;
        }
    }
    debug_assert_eq!(count, 0);
    let mut p = LocalTimeProfile { levels, values };
    merge_equal_runs(&mut p);
    Ok(p)
}

fn merge_equal_runs(p: &mut LocalTimeProfile) {
    let mut levels = vec![p.levels[0]];
    let mut values: Vec<f64> = Vec::new();
    for (i, &v) in p.values.iter().enumerate() {
        if values.last() == Some(&v) {
            *levels.last_mut().expect("nonempty") = p.levels[i + 1];
        } else {
            values.push(v);
            levels.push(p.levels[i + 1]);
        }
    }
    p.levels = levels;
    p.values = values;
}

/// Path from 0 stopped at its `(visits_after_start + 1)`-th visit to 0,
/// conditioned on that visit happening, by rejection.
///
/// `visits_after_start = 0` returns the trivial path stopped at time 0.
pub fn simulate_to_inverse_local_time<R: Rng + ?Sized>(
    lambda: f64,
    s: &ServiceDist,
    visits_after_start: usize,
    rng: &mut R,
    max_attempts: usize,
) -> Result<(LevyRun, usize), LevyError> {
    for attempt in 1..=max_attempts {
        let run = simulate_levy(lambda, s, 0.0, Stop::VisitsToZero(visits_after_start + 1), rng)?;
        if !run.escaped {
            return Ok((run, attempt));
        }
    }
    Err(LevyError::SamplingFailed {
        attempts: max_attempts,
    })
}

/// Scaled path `X_n(t) = x(n² t)/n` started from one jump `S_n` and stopped
/// at 0, conditioned on its lifetime exceeding `eps`, by rejection. Returns
/// the accepted path and the number of attempts.
pub fn sample_conditioned_excursion<R: Rng + ?Sized>(
    lambda_n: f64,
    s: &ServiceDist,
    n: f64,
    eps: f64,
    rng: &mut R,
    max_attempts: usize,
) -> Result<(LevyRun, usize), LevyError> {
    if !(eps > 0.0) || !(n >= 1.0) {
        return Err(LevyError::Arg(format!("eps {eps}, n {n}")));
    }
    for attempt in 1..=max_attempts {
        let x0 = s.sample(rng);
        let run = simulate_levy(lambda_n, s, x0, Stop::FirstPassage, rng)?;
        if run.stop_time / (n * n) > eps {
            return Ok((
                LevyRun {
                    path: run.path.rescaled(n * n, n),
                    stop_time: run.stop_time / (n * n),
                    ..run
                },
                attempt,
            ));
        }
    }
    Err(LevyError::SamplingFailed {
        attempts: max_attempts,
    })
}
