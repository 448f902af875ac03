//! Heavy-traffic rescaling and grid simulators for the diffusion limits.
//!
//! The diffusion paths here are the only approximate paths in the crate;
//! they are returned as [`GridPath`] so the step size travels with them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::levy::LocalTimeProfile;
use crate::paths::{extract_first_long_excursion, reflect, Path, PathBuilder, PathError};

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("invalid argument: {0}")]
    Arg(String),
    #[error("no excursion longer than {eps} within {attempts} attempts")]
    NoExcursion { eps: f64, attempts: usize },
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleKind {
    /// Time / n², space / n.
    Queue,
    /// Time / n, space / n.
    Cmj,
    /// Time / n², space / n.
    Levy,
}

impl ScaleKind {
    fn time_factor(self, n: f64) -> f64 {
        match self {
            ScaleKind::Queue | ScaleKind::Levy => n * n,
            ScaleKind::Cmj => n,
        }
    }
}

/// `p ↦ p(factor · t) / n` for the given kind.
pub fn rescale(p: &Path, n: f64, kind: ScaleKind) -> Path {
    p.rescaled(kind.time_factor(n), n)
}

/// Exact inverse of [`rescale`].
pub fn unscale(p: &Path, n: f64, kind: ScaleKind) -> Path {
    p.rescaled(1.0 / kind.time_factor(n), 1.0 / n)
}

/// `L_n(a) = ℓ(n a) / n`.
pub fn rescale_profile(p: &LocalTimeProfile, n: f64) -> LocalTimeProfile {
    p.rescaled(n, n)
}

/// A path interpolated linearly between grid points spaced `dt` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub path: Path,
    pub dt: f64,
}

impl GridPath {
    /// Value at the grid point nearest below `t`.
    pub fn at(&self, t: f64) -> f64 {
        self.path.value_at(t)
    }
}

fn check_grid(dt: f64, horizon: f64) -> Result<usize, ScalingError> {
    if !(dt > 0.0 && horizon > 0.0 && horizon.is_finite()) {
        return Err(ScalingError::Arg(format!("dt {dt}, horizon {horizon}")));
    }
    Ok((horizon / dt).round().max(1.0) as usize)
}

fn linear_path(values: &[f64], dt: f64) -> Path {
    let mut b = PathBuilder::with_capacity(values.len());
    for (k, w) in values.windows(2).enumerate() {
        b.push(k as f64 * dt, w[0], (w[1] - w[0]) / dt);
    }
    let steps = values.len() - 1;
    b.push(steps as f64 * dt, values[steps], 0.0);
    b.finish(f64::INFINITY)
}

/// Euler grid of `X` (drift `-α`, variance `2β` per unit time) from `x0`,
/// reflected above its past infimum. Frozen after `horizon`.
pub fn simulate_reflected_bm<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    x0: f64,
    dt: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<GridPath, ScalingError> {
    let steps = check_grid(dt, horizon)?;
    if !(x0 >= 0.0 && beta > 0.0) {
        return Err(ScalingError::Arg(format!("x0 {x0}, beta {beta}")));
    }
    let sd = (2.0 * beta * dt).sqrt();
    let mut xs = Vec::with_capacity(steps + 1);
    let mut x = x0;
    xs.push(x);
    for _ in 0..steps {
        let z: f64 = StandardNormal.sample(rng);
        x += -alpha * dt + sd * z;
        xs.push(x);
    }
    Ok(GridPath {
        path: reflect(&linear_path(&xs, dt)),
        dt,
    })
}

/// Values of the reflected Euler grid at the requested times only.
///
/// Same law as sampling [`simulate_reflected_bm`] at grid times, without
/// building the path.
pub fn reflected_bm_marginals<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    x0: f64,
    dt: f64,
    times: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let sd = (2.0 * beta * dt).sqrt();
    let mut out = Vec::with_capacity(times.len());
    let (mut y, mut k) = (x0, 0usize);
    for &t in times {
        let target = (t / dt).round() as usize;
        while k < target {
            let z: f64 = StandardNormal.sample(rng);
            y = (y - alpha * dt + sd * z).max(0.0);
            k += 1;
        }
        out.push(y);
    }
    out
}

/// Euler–Maruyama for `dY = -(α/β) Y dt + sqrt(Y/β) dB` with full
/// truncation, absorbed at 0.
pub fn simulate_feller<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    y0: f64,
    dt: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<GridPath, ScalingError> {
    let steps = check_grid(dt, horizon)?;
    if !(y0 >= 0.0 && beta > 0.0) {
        return Err(ScalingError::Arg(format!("y0 {y0}, beta {beta}")));
    }
    let mut ys = Vec::with_capacity(steps + 1);
    let mut y = y0;
    ys.push(y);
    for _ in 0..steps {
        y = feller_step(y, alpha, beta, dt, rng);
        ys.push(y);
    }
    Ok(GridPath {
        path: linear_path(&ys, dt),
        dt,
    })
}

#[inline]
fn feller_step<R: Rng + ?Sized>(y: f64, alpha: f64, beta: f64, dt: f64, rng: &mut R) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    let next = y - alpha / beta * y * dt + (y / beta * dt).sqrt() * z;
    next.max(0.0)
}

/// Parameters `(alpha', beta')` for which the Feller diffusion
/// `dY = -(alpha'/beta') Y dt + sqrt(Y / beta') dB` is the scaling limit of CMJ
/// populations in the regime `(alpha, beta)`: drift `-alpha/beta` and Gaussian
/// coefficient `2/beta`.
pub fn cmj_limit_feller_params(alpha: f64, beta: f64) -> (f64, f64) {
    (alpha / 2.0, beta / 2.0)
}

/// Feller Euler values at the requested times only.
pub fn feller_marginals<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    y0: f64,
    dt: f64,
    times: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let (mut y, mut k) = (y0, 0usize);
    for &t in times {
        let target = (t / dt).round() as usize;
        while k < target && y > 0.0 {
            y = feller_step(y, alpha, beta, dt, rng);
            k += 1;
        }
        out.push(y);
    }
    out
}

/// First long excursion of a reflected Brownian grid with its binned local
/// time profile.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestedExcursion {
    pub profile: LocalTimeProfile,
    pub length: f64,
    pub max: f64,
}

/// Grid steps after which the harvester gives up on one reflected path.
const HARVEST_STEP_BUDGET: usize = 200_000_000;

/// Runs the reflected grid from 0 until an excursion longer than `eps`
/// completes, then bins its occupation: `ℓ(a) ≈ (dt / bin) · #{grid values in [a, a + bin)}`.
pub fn harvest_bm_excursion_local_time<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    eps: f64,
    dt: f64,
    level_bin: f64,
    rng: &mut R,
) -> Result<HarvestedExcursion, ScalingError> {
    if !(eps > 0.0 && dt > 0.0 && level_bin > 0.0 && beta > 0.0) {
        return Err(ScalingError::Arg(format!("eps {eps}, dt {dt}, bin {level_bin}")));
    }
    let sd = (2.0 * beta * dt).sqrt();
    let mut run: Vec<f64> = Vec::new();
    let mut y = 0.0f64;
    for _ in 0..HARVEST_STEP_BUDGET {
        let z: f64 = StandardNormal.sample(rng);
        y = (y - alpha * dt + sd * z).max(0.0);
        if y > 0.0 {
            run.push(y);
            continue;
        }
        // The grid excursion is 0, run..., 0 over (run.len() + 1) steps.
        if (run.len() + 1) as f64 * dt > eps {
            let mut vals = Vec::with_capacity(run.len() + 2);
            vals.push(0.0);
            vals.extend_from_slice(&run);
            vals.push(0.0);
            let grid = linear_path(&vals, dt);
            let ex = extract_first_long_excursion(&grid, eps)?;
            let profile = bin_occupation(&run, dt, level_bin);
            return Ok(HarvestedExcursion {
                profile,
                length: ex.excursion.lifetime(),
                max: ex.excursion.sup(),
            });
        }
        run.clear();
    }
    Err(ScalingError::NoExcursion {
        eps,
        attempts: HARVEST_STEP_BUDGET,
    })
}

fn bin_occupation(values: &[f64], dt: f64, bin: f64) -> LocalTimeProfile {
    let top = values.iter().copied().fold(0.0, f64::max);
    let nbins = (top / bin).floor() as usize + 1;
    let mut counts = vec![0usize; nbins];
    for &v in values {
        counts[((v / bin).floor() as usize).min(nbins - 1)] += 1;
    }
    LocalTimeProfile {
        levels: (0..=nbins).map(|i| i as f64 * bin).collect(),
        values: counts.iter().map(|&c| c as f64 * dt / bin).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn rescale_examples() {
        let p = Path::from_steps(&[(0.0, 3.0), (1.0, 1.0), (4.0, 0.0)], f64::INFINITY).unwrap();
        assert!(rescale(&p, 1.0, ScaleKind::Queue).approx_eq(&p));
        let n = 7.0;
        let q = Path::from_steps(&[(0.0, n), (n * n, 0.0)], f64::INFINITY).unwrap();
        let want = Path::from_steps(&[(0.0, 1.0), (1.0, 0.0)], f64::INFINITY).unwrap();
        assert!(rescale(&q, n, ScaleKind::Queue).approx_eq(&want));
        for kind in [ScaleKind::Queue, ScaleKind::Cmj, ScaleKind::Levy] {
            assert!(unscale(&rescale(&p, 13.0, kind), 13.0, kind).approx_eq(&p));
        }
    }

    #[test]
    fn feller_from_zero_stays_zero() {
        let g = simulate_feller(1.0, 1.0, 0.0, 1e-3, 1.0, &mut stream(0, "t", 0)).unwrap();
        assert_eq!(g.path.sup(), 0.0);
    }

    #[test]
    fn reflected_bm_is_nonnegative() {
        let g = simulate_reflected_bm(1.0, 1.0, 0.0, 1e-3, 2.0, &mut stream(0, "t", 0)).unwrap();
        assert!(g.path.inf() >= 0.0);
        assert_eq!(g.path.value_at(0.0), 0.0);
    }

    #[test]
    fn marginals_agree_with_full_paths() {
        let times = [0.25, 0.5];
        let a = reflected_bm_marginals(1.0, 1.0, 0.3, 1e-3, &times, &mut stream(9, "m", 0));
        let g = simulate_reflected_bm(1.0, 1.0, 0.3, 1e-3, 0.5, &mut stream(9, "m", 0)).unwrap();
        for (t, v) in times.iter().zip(a) {
            assert!((g.at(*t) - v).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn harvested_profile_integrates_to_length() {
        let mut rng = stream(2, "harvest", 0);
        for _ in 0..5 {
            let h = harvest_bm_excursion_local_time(1.0, 1.0, 0.05, 1e-5, 1e-2, &mut rng).unwrap();
            assert!(h.length > 0.05);
            assert!((h.profile.total() - h.length).abs() <= 0.02 * h.length);
            assert!(h.profile.top() <= h.max + 1e-2 + 1e-12);
            assert!(h.profile.at(h.max + 0.02) == 0.0);
        }
    }
}
