//! The experiment catalog. Each experiment turns one correspondence or limit
//! statement into report rows with pinned thresholds.

use rayon::prelude::*;
use thiserror::Error;

use super::report::{ReportRow, SamplePair, TestReport};
use super::stats::{self, ks_critical, ks_two_sample, StatsError};
use crate::cmj::{simulate_cmj, simulate_cmj_from, CmjError, InitialCondition};
use crate::distributions::{DistError, Family, Regime, ServiceDist};
use crate::lamperti::{self, LampertiError};
use crate::levy::{
    local_time_profile, sample_conditioned_excursion, simulate_levy, LevyError, Stop,
    DEFAULT_MAX_ATTEMPTS,
};
use crate::paths::{Excursion, PathError};
use crate::psq::{simulate_ps, simulate_ps_from, split_busy_cycles, PsError, PsStop};
use crate::rng::{stream, SimRng};
use crate::scaling::{
    cmj_limit_feller_params, feller_marginals, harvest_bm_excursion_local_time, reflected_bm_marginals, rescale, ScaleKind,
    ScalingError,
};

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("conditioned sampler gave up after {0} attempts")]
    SamplingFailed(usize),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error(transparent)]
    Cmj(#[from] CmjError),
    #[error(transparent)]
    Ps(#[from] PsError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Lamperti(#[from] LampertiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::E1,
        ExperimentId::E2,
        ExperimentId::E3,
        ExperimentId::E4,
        ExperimentId::E5,
        ExperimentId::E6,
        ExperimentId::E7,
        ExperimentId::E8,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.label().eq_ignore_ascii_case(s.trim()))
    }

    pub fn label(self) -> &'static str {
        match self {
            ExperimentId::E1 => "E1",
            ExperimentId::E2 => "E2",
            ExperimentId::E3 => "E3",
            ExperimentId::E4 => "E4",
            ExperimentId::E5 => "E5",
            ExperimentId::E6 => "E6",
            ExperimentId::E7 => "E7",
            ExperimentId::E8 => "E8",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::E1 => "PS busy cycles are Lamperti time changes of CMJ paths (exact, pathwise)",
            ExperimentId::E2 => "local time of a Levy path killed at 0 is a CMJ process (exact in law)",
            ExperimentId::E3 => "stationary PS departures form a Poisson process",
            ExperimentId::E4 => "stationary PS queue length is geometric",
            ExperimentId::E5 => "conditioned CMJ converges to Brownian-excursion local time; queue and workload excursion lengths agree",
            ExperimentId::E6 => "CMJ from stationary residuals converges to the Feller diffusion",
            ExperimentId::E7 => "PS queue length converges to reflected drifted Brownian motion",
            ExperimentId::E8 => "state-space collapse Q = W/beta and the fresh-lifetime discontinuity",
        }
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Parameters of one experiment. Experiments on a fixed load use the first
/// ladder entry `n`, giving `ρ = 1 - α/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub family: Family,
    pub n_ladder: Vec<u32>,
    pub replications: usize,
    pub eps: f64,
    /// Grid step for diffusion marginals.
    pub dt: f64,
    /// Grid step for Brownian excursion harvesting.
    pub harvest_dt: f64,
    pub level_bin: f64,
    /// Samples per side for comparisons that are exact in law at every `n`.
    pub consistency_replications: usize,
    /// Frozen KS threshold for those comparisons.
    pub exact_ks_threshold: f64,
    pub seed: u64,
    /// Scaled initial population `ζ` (and initial life length in E2).
    pub zeta: u32,
    /// Finite-n allowance added to KS thresholds at the top of the ladder.
    pub allowance: f64,
    pub ks_coefficient: f64,
}

impl ExperimentConfig {
    pub fn defaults(id: ExperimentId) -> Self {
        let base = ExperimentConfig {
            lambda: 1.0,
            alpha: 1.0,
            family: Family::Uniform { spread: 1.0 },
            n_ladder: vec![25, 50, 100, 200],
            replications: 4000,
            eps: 0.1,
            dt: 1e-4,
            harvest_dt: 1e-5,
            level_bin: 1e-2,
            consistency_replications: 10_000,
            exact_ks_threshold: 0.032,
            seed: 20240601,
            zeta: 1,
            allowance: 0.03,
            ks_coefficient: stats::KS_COEFFICIENT,
        };
        match id {
            // ρ = 0.8
            ExperimentId::E1 => ExperimentConfig {
                n_ladder: vec![5],
                replications: 1000,
                ..base
            },
            ExperimentId::E2 => ExperimentConfig {
                n_ladder: vec![5],
                replications: 5000,
                ..base
            },
            // ρ = 0.9, replications = expected departures
            ExperimentId::E3 => ExperimentConfig {
                n_ladder: vec![10],
                replications: 10_000,
                ..base
            },
            // ρ = 0.95
            ExperimentId::E4 => ExperimentConfig {
                n_ladder: vec![20],
                replications: 20_000,
                ..base
            },
            ExperimentId::E5 => ExperimentConfig {
                family: Family::Exponential,
                replications: 5000,
                ..base
            },
            ExperimentId::E6 | ExperimentId::E7 => base,
            ExperimentId::E8 => ExperimentConfig {
                family: Family::Deterministic,
                alpha: 0.25,
                n_ladder: vec![25, 200],
                replications: 2000,
                ..base
            },
        }
    }

    fn regime(&self) -> Result<Regime, VerifyError> {
        Ok(Regime::new(self.lambda, self.alpha, self.family)?)
    }

    fn validate(&self) -> Result<(), VerifyError> {
        let bad = |m: String| Err(VerifyError::Config(m));
        if self.n_ladder.is_empty() {
            return bad("n_ladder is empty".into());
        }
        if let Some(&n) = self.n_ladder.iter().find(|&&n| f64::from(n) <= self.alpha) {
            return bad(format!("ladder entry {n} does not exceed alpha = {}", self.alpha));
        }
        if self.replications < 2 || self.consistency_replications < 2 {
            return bad(format!(
                "replications = {}, consistency_replications = {}",
                self.replications, self.consistency_replications
            ));
        }
        if !(self.eps > 0.0 && self.dt > 0.0 && self.harvest_dt > 0.0 && self.level_bin > 0.0) {
            return bad("eps, dt, harvest_dt and level_bin must be positive".into());
        }
        if self.zeta == 0 {
            return bad("zeta must be at least 1".into());
        }
        Ok(())
    }

    fn top_n(&self) -> u32 {
        *self.n_ladder.last().expect("validated")
    }

    fn crit(&self, n: usize, m: usize) -> f64 {
        ks_critical(n, m, self.ks_coefficient)
    }

    /// Threshold for a limit comparison at ladder entry `n`: gated with the
    /// allowance at the top of the ladder, informational below.
    fn limit_threshold(&self, n: u32, size: usize) -> f64 {
        if n == self.top_n() {
            self.crit(size, size) + self.allowance
        } else {
            f64::INFINITY
        }
    }
}

fn replicate<T, F>(reps: usize, f: F) -> Result<Vec<T>, VerifyError>
where
    T: Send,
    F: Fn(u64) -> Result<T, VerifyError> + Sync + Send,
{
    (0..reps as u64).into_par_iter().map(f).collect()
}

fn column<T: Copy, const K: usize>(v: &[[T; K]], k: usize) -> Vec<T> {
    v.iter().map(|r| r[k]).collect()
}

struct Ctx<'a> {
    id: &'a str,
    cfg: &'a ExperimentConfig,
    report: TestReport,
}

impl<'a> Ctx<'a> {
    fn new(id: ExperimentId, cfg: &'a ExperimentConfig) -> Self {
        Self {
            id: id.label(),
            cfg,
            report: TestReport::default(),
        }
    }

    fn row(&mut self, stat: impl Into<String>, value: f64, threshold: f64, n: Option<u32>, reps: usize) {
        self.report
            .rows
            .push(ReportRow::new(self.id, stat, value, threshold, n, reps, self.cfg.seed));
    }

    fn ks(&mut self, stat: &str, xs: Vec<f64>, ys: Vec<f64>, threshold: f64, n: Option<u32>) -> Result<f64, VerifyError> {
        let d = ks_two_sample(&xs, &ys)?;
        self.row(stat, d, threshold, n, xs.len().min(ys.len()));
        let name = match n {
            Some(n) => format!("{}_{stat}_n{n}", self.id),
            None => format!("{}_{stat}", self.id),
        };
        self.report.samples.push(SamplePair {
            name,
            left: xs,
            right: ys,
        });
        Ok(d)
    }

    /// Worst increase of a KS statistic between consecutive ladder entries,
    /// allowed up to one critical value of sampling noise.
    fn trend(&mut self, stat: &str, ks: &[f64], size: usize) {
        if ks.len() < 2 {
            return;
        }
        let worst = ks.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let thr = self.cfg.crit(size, size);
        self.row(format!("trend_{stat}"), worst, thr, None, size);
    }

    fn rng(&self, domain: &str, i: u64) -> SimRng {
        stream(self.cfg.seed, &format!("{}/{domain}", self.id), i)
    }
}

/// Runs one experiment of the catalog.
pub fn run_experiment(id: ExperimentId, cfg: &ExperimentConfig) -> Result<TestReport, VerifyError> {
    cfg.validate()?;
    let mut ctx = Ctx::new(id, cfg);
    match id {
        ExperimentId::E1 => lamperti_bridge(&mut ctx)?,
        ExperimentId::E2 => local_time_cmj(&mut ctx)?,
        ExperimentId::E3 => poisson_departures(&mut ctx)?,
        ExperimentId::E4 => geometric_queue(&mut ctx)?,
        ExperimentId::E5 => conditioned_excursions(&mut ctx)?,
        ExperimentId::E6 => feller_limit(&mut ctx)?,
        ExperimentId::E7 => reflected_bm_limit(&mut ctx)?,
        ExperimentId::E8 => collapse_and_discontinuity(&mut ctx)?,
    }
    Ok(ctx.report)
}

fn lamperti_bridge(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let n = cfg.n_ladder[0];
    let nf = f64::from(n);
    let s = cfg.regime()?.service(nf)?;
    let tr = simulate_ps(
        cfg.lambda,
        &s,
        &InitialCondition::Residuals(vec![]),
        PsStop::BusyPeriods {
            count: cfg.replications,
            max_time: f64::INFINITY,
        },
        &mut ctx.rng("ps", 0),
    )?;
    let cycles = split_busy_cycles(&tr)?;
    let (mut mismatches, mut bad_jumps, mut scale_mismatches) = (0usize, 0usize, 0usize);
    let mut gap: f64 = 0.0;
    for c in &cycles {
        let e = &c.excursion;
        let z = lamperti::inverse(e)?;
        if !lamperti::forward(&z).path().approx_eq(e.path()) {
            mismatches += 1;
        }
        gap = gap.max((e.lifetime() - z.area()).abs());
        let segs = z.path().segments();
        bad_jumps += segs.windows(2).filter(|w| (w[1].value - w[0].value).abs() != 1.0).count();
        let lhs = lamperti::inverse(&Excursion::new(rescale(e.path(), nf, ScaleKind::Queue))?)?;
        let rhs = rescale(z.path(), nf, ScaleKind::Cmj);
        if !lhs.path().approx_eq(&rhs) {
            scale_mismatches += 1;
        }
    }
    let k = cycles.len();
    ctx.row("cycles", k as f64, f64::INFINITY, Some(n), k);
    ctx.row("cycles_short", cfg.replications.saturating_sub(k) as f64, 0.0, Some(n), k);
    ctx.row("roundtrip_mismatches", mismatches as f64, 0.0, Some(n), k);
    ctx.row("max_lifetime_vs_area_gap", gap, 1e-9, Some(n), k);
    ctx.row("non_unit_jumps", bad_jumps as f64, 0.0, Some(n), k);
    ctx.row("rescale_bridge_mismatches", scale_mismatches as f64, 0.0, Some(n), k);
    Ok(())
}

fn local_time_cmj(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let n = cfg.n_ladder[0];
    let s = cfg.regime()?.service(f64::from(n))?;
    let delta = f64::from(cfg.zeta);
    let reps = cfg.replications;
    let cmj = replicate(reps, |i| {
        let tr = simulate_cmj_from(cfg.lambda, &s, &[delta], f64::INFINITY, &mut ctx.rng("cmj", i))?;
        Ok([tr.end_time, tr.total_progeny as f64, tr.area()])
    })?;
    let levy = replicate(reps, |i| {
        let run = simulate_levy(cfg.lambda, &s, delta, Stop::FirstPassage, &mut ctx.rng("levy", i))?;
        let p = local_time_profile(&run.path, run.stop_time)?;
        Ok([p.top(), 1.0 + run.jumps as f64, p.total(), (p.total() - run.stop_time).abs()])
    })?;
    let thr = cfg.crit(reps, reps).min(cfg.exact_ks_threshold);
    for (k, name) in ["ks_extinction_time", "ks_total_progeny", "ks_area"].iter().enumerate() {
        ctx.ks(name, column(&cmj, k), column(&levy, k), thr, Some(n))?;
    }
    let occ = column(&levy, 3).into_iter().fold(0.0, f64::max);
    ctx.row("max_profile_mass_vs_time_gap", occ, 1e-9, Some(n), reps);
    Ok(())
}

fn poisson_departures(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let n = cfg.n_ladder[0];
    let s = cfg.regime()?.service(f64::from(n))?;
    let horizon = cfg.replications as f64 / cfg.lambda;
    let tr = simulate_ps(
        cfg.lambda,
        &s,
        &InitialCondition::NuStar,
        PsStop::Horizon(horizon),
        &mut ctx.rng("ps", 0),
    )?;
    let chk = stats::poisson_process_test(&tr.departure_times, cfg.lambda, horizon)?;
    let k = chk.events;
    ctx.row("departures", k as f64, f64::INFINITY, Some(n), k);
    ctx.row("poisson_ks_gaps", chk.ks_gaps, chk.ks_threshold, Some(n), k);
    ctx.row("poisson_abs_lag1_corr", chk.lag1_corr.abs(), chk.corr_threshold, Some(n), k);
    ctx.row("poisson_abs_count_z", chk.count_z.abs(), chk.count_threshold, Some(n), k);
    Ok(())
}

/// Unscaled time at which stationary queue lengths are read.
const STATIONARY_READ_TIME: f64 = 5.0;

fn geometric_queue(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let n = cfg.n_ladder[0];
    let regime = cfg.regime()?;
    let s = regime.service(f64::from(n))?;
    let rho = regime.rho(f64::from(n))?;
    let t = STATIONARY_READ_TIME / cfg.lambda;
    let reps = cfg.replications;
    let qs = replicate(reps, |i| {
        let tr = simulate_ps(
            cfg.lambda,
            &s,
            &InitialCondition::NuStar,
            PsStop::Horizon(2.0 * t),
            &mut ctx.rng("ps", i),
        )?;
        Ok(tr.queue_length.value_at(t) as usize)
    })?;
    let kmax = qs.iter().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![0u64; kmax + 1];
    for q in &qs {
        counts[*q] += 1;
    }
    let mut probs: Vec<f64> = (0..kmax).map(|k| (1.0 - rho) * rho.powi(k as i32)).collect();
    probs.push(rho.powi(kmax as i32));
    let chi = stats::chi_square_gof(&counts, &probs, 5.0)?;
    ctx.row("chi_square", chi.statistic, chi.quantile(0.999), Some(n), reps);
    ctx.row("chi_square_buckets", chi.buckets as f64, f64::INFINITY, Some(n), reps);
    let mean = qs.iter().sum::<usize>() as f64 / reps as f64;
    ctx.row("mean_queue_length", mean, f64::INFINITY, Some(n), reps);
    Ok(())
}

/// Scaled busy period of a PS queue started by one arrival, conditioned on
/// exceeding `eps`.
pub fn conditioned_busy_period(
    lambda: f64,
    s: &ServiceDist,
    n: f64,
    eps: f64,
    rng: &mut SimRng,
) -> Result<f64, VerifyError> {
    for _ in 0..DEFAULT_MAX_ATTEMPTS {
        let first = s.sample(rng);
        let tr = simulate_ps_from(lambda, s, &[first], PsStop::UntilEmpty { max_time: f64::INFINITY }, rng)?;
        let t = tr.end_time / (n * n);
        if t > eps {
            return Ok(t);
        }
    }
    Err(VerifyError::SamplingFailed(DEFAULT_MAX_ATTEMPTS))
}

/// `(extinction time, ∫Z, sup of bin averages of Z)` for the scaled CMJ
/// `Z_n(t) = z(nt)/n` from one fresh individual, conditioned on `∫Z_n > eps`.
///
/// The sup is taken over averages on windows `[k·bin, (k+1)·bin)`, the same
/// functional the binned Brownian local time provides.
pub fn conditioned_cmj_functionals(
    lambda: f64,
    s: &ServiceDist,
    n: f64,
    eps: f64,
    bin: f64,
    rng: &mut SimRng,
) -> Result<[f64; 3], VerifyError> {
    for _ in 0..DEFAULT_MAX_ATTEMPTS {
        let tr = simulate_cmj(lambda, s, &InitialCondition::SingleS, f64::INFINITY, rng)?;
        let area = tr.area() / (n * n);
        if area > eps {
            let z = rescale(&tr.population, n, ScaleKind::Cmj);
            let top = tr.end_time / n;
            let sup = z.window_averages(bin, top).into_iter().fold(0.0, f64::max);
            return Ok([top, area, sup]);
        }
    }
    Err(VerifyError::SamplingFailed(DEFAULT_MAX_ATTEMPTS))
}

fn harvest(ctx: &Ctx, beta: f64, domain: &str) -> Result<Vec<[f64; 3]>, VerifyError> {
    let cfg = ctx.cfg;
    replicate(cfg.replications, |i| {
        let h = harvest_bm_excursion_local_time(
            cfg.alpha,
            beta,
            cfg.eps,
            cfg.harvest_dt,
            cfg.level_bin,
            &mut ctx.rng(domain, i),
        )?;
        Ok([h.max, h.length, h.profile.sup()])
    })
}

fn conditioned_excursions(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let regime = cfg.regime()?;
    let reps = cfg.replications;
    let bm = harvest(ctx, regime.beta(), "bm")?;
    let names = ["ks_extinction_time", "ks_area", "ks_binned_sup"];
    let mut trends: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for &n in &cfg.n_ladder {
        let nf = f64::from(n);
        let s = regime.service(nf)?;
        let dom = format!("n{n}");
        let z = replicate(reps, |i| {
            conditioned_cmj_functionals(cfg.lambda, &s, nf, cfg.eps, cfg.level_bin, &mut ctx.rng(&format!("cmj/{dom}"), i))
        })?;
        let thr = cfg.limit_threshold(n, reps);
        for (k, name) in names.iter().enumerate() {
            let d = ctx.ks(name, column(&z, k), column(&bm, k), thr, Some(n))?;
            trends[k].push(d);
        }
        let creps = cfg.consistency_replications;
        let queue = replicate(creps, |i| {
            conditioned_busy_period(cfg.lambda, &s, nf, cfg.eps, &mut ctx.rng(&format!("queue/{dom}"), i))
        })?;
        let work = replicate(creps, |i| {
            let (run, _) = sample_conditioned_excursion(
                cfg.lambda,
                &s,
                nf,
                cfg.eps,
                &mut ctx.rng(&format!("work/{dom}"), i),
                DEFAULT_MAX_ATTEMPTS,
            )?;
            Ok(run.stop_time)
        })?;
        ctx.ks("ks_queue_vs_workload_length", queue, work, cfg.exact_ks_threshold, Some(n))?;
    }
    for (k, name) in names.iter().enumerate() {
        ctx.trend(name, &trends[k], reps);
    }
    Ok(())
}

/// Times at which CMJ marginals are compared with the Feller diffusion.
pub const FELLER_TIMES: [f64; 3] = [0.25, 0.5, 1.0];
/// Times at which queue marginals are compared with reflected Brownian motion.
pub const QUEUE_TIMES: [f64; 2] = [0.5, 1.0];

fn time_label(t: f64) -> String {
    format!("{t}")
}

fn feller_limit(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let regime = cfg.regime()?;
    let beta = regime.beta();
    let reps = cfg.replications;
    let zeta = f64::from(cfg.zeta);
    let (fa, fb) = cmj_limit_feller_params(cfg.alpha, beta);
    let feller = replicate(reps, |i| {
        Ok(feller_marginals(fa, fb, zeta, cfg.dt, &FELLER_TIMES, &mut ctx.rng("feller", i)))
    })?;
    let tmax = FELLER_TIMES[FELLER_TIMES.len() - 1];
    let mut trends: Vec<Vec<f64>> = vec![Vec::new(); FELLER_TIMES.len()];
    for &n in &cfg.n_ladder {
        let nf = f64::from(n);
        let s = regime.service(nf)?;
        let init = InitialCondition::ZetaStar((cfg.zeta * n) as usize);
        let z = replicate(reps, |i| {
            let tr = simulate_cmj(cfg.lambda, &s, &init, nf * tmax, &mut ctx.rng(&format!("cmj/n{n}"), i))?;
            Ok(FELLER_TIMES.map(|t| tr.population.value_at(nf * t) / nf))
        })?;
        for (k, &t) in FELLER_TIMES.iter().enumerate() {
            let ys: Vec<f64> = feller.iter().map(|v| v[k]).collect();
            let d = ctx.ks(&format!("ks_Z_t{}", time_label(t)), column(&z, k), ys, cfg.limit_threshold(n, reps), Some(n))?;
            trends[k].push(d);
        }
    }
    for (k, &t) in FELLER_TIMES.iter().enumerate() {
        ctx.trend(&format!("ks_Z_t{}", time_label(t)), &trends[k], reps);
    }
    Ok(())
}

fn reflected_bm_limit(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let regime = cfg.regime()?;
    let beta = regime.beta();
    let reps = cfg.replications;
    let zeta = f64::from(cfg.zeta);
    let bm = replicate(reps, |i| {
        let v = reflected_bm_marginals(cfg.alpha, beta, zeta * beta, cfg.dt, &QUEUE_TIMES, &mut ctx.rng("bm", i));
        Ok([v[0] / beta, v[1] / beta])
    })?;
    let lengths: Vec<f64> = harvest(ctx, beta, "harvest")?.iter().map(|h| h[1]).collect();
    let tmax = QUEUE_TIMES[QUEUE_TIMES.len() - 1];
    let mut trends: Vec<Vec<f64>> = vec![Vec::new(); QUEUE_TIMES.len() + 1];
    for &n in &cfg.n_ladder {
        let nf = f64::from(n);
        let s = regime.service(nf)?;
        let init = InitialCondition::ZetaStar((cfg.zeta * n) as usize);
        let q = replicate(reps, |i| {
            let tr = simulate_ps(cfg.lambda, &s, &init, PsStop::Horizon(nf * nf * tmax), &mut ctx.rng(&format!("ps/n{n}"), i))?;
            Ok(QUEUE_TIMES.map(|t| tr.queue_length.value_at(nf * nf * t) / nf))
        })?;
        let thr = cfg.limit_threshold(n, reps);
        for (k, &t) in QUEUE_TIMES.iter().enumerate() {
            let d = ctx.ks(&format!("ks_Q_t{}", time_label(t)), column(&q, k), column(&bm, k), thr, Some(n))?;
            trends[k].push(d);
        }
        let busy = replicate(reps, |i| {
            conditioned_busy_period(cfg.lambda, &s, nf, cfg.eps, &mut ctx.rng(&format!("busy/n{n}"), i))
        })?;
        let d = ctx.ks("ks_excursion_length", busy, lengths.clone(), thr, Some(n))?;
        trends[QUEUE_TIMES.len()].push(d);
    }
    for (k, &t) in QUEUE_TIMES.iter().enumerate() {
        ctx.trend(&format!("ks_Q_t{}", time_label(t)), &trends[k], reps);
    }
    ctx.trend("ks_excursion_length", &trends[QUEUE_TIMES.len()], reps);
    Ok(())
}

/// Scaled times at which queue length and workload are compared.
pub const COLLAPSE_TIMES: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
/// Queue level below which collapse discrepancies are not counted.
pub const COLLAPSE_FLOOR: f64 = 0.1;
/// Scaled time at which the fresh-lifetime CMJ is read.
pub const DISCONTINUITY_TIME: f64 = 0.1;

fn collapse_and_discontinuity(ctx: &mut Ctx) -> Result<(), VerifyError> {
    let cfg = ctx.cfg;
    let regime = cfg.regime()?;
    let beta = regime.beta();
    let reps = cfg.replications;
    let zeta = f64::from(cfg.zeta);

    let mut means = Vec::new();
    for &n in &cfg.n_ladder {
        let nf = f64::from(n);
        let s = regime.service(nf)?;
        let init = InitialCondition::ZetaStar((cfg.zeta * n) as usize);
        let tmax = COLLAPSE_TIMES[COLLAPSE_TIMES.len() - 1];
        let per_rep = replicate(reps, |i| {
            let tr = simulate_ps(cfg.lambda, &s, &init, PsStop::Horizon(nf * nf * tmax), &mut ctx.rng(&format!("ps/n{n}"), i))?;
            let (mut sum, mut count) = (0.0, 0usize);
            for t in COLLAPSE_TIMES {
                let q = tr.queue_length.value_at(nf * nf * t) / nf;
                if q > COLLAPSE_FLOOR {
                    let w = tr.workload.value_at(nf * nf * t) / nf;
                    sum += (q - w / beta).abs();
                    count += 1;
                }
            }
            Ok((sum, count))
        })?;
        let (sum, count) = per_rep.iter().fold((0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1));
        let mean = if count > 0 { sum / count as f64 } else { f64::NAN };
        ctx.row("collapse_mean_abs_gap", mean, f64::INFINITY, Some(n), reps);
        means.push(mean);
    }
    if means.len() >= 2 {
        let ratio = means[means.len() - 1] / means[0];
        ctx.row("collapse_ratio_top_vs_bottom", ratio, 0.5, None, reps);
    }

    let n = cfg.top_n();
    let nf = f64::from(n);
    let s = regime.service(nf)?;
    let t = DISCONTINUITY_TIME;
    let read = |init: InitialCondition, domain: &str| {
        replicate(reps, |i| {
            let tr = simulate_cmj(cfg.lambda, &s, &init, nf * t, &mut ctx.rng(domain, i))?;
            Ok([tr.population.value_at(0.0) / nf, tr.population.value_at(nf * t) / nf])
        })
    };
    let fresh = read(InitialCondition::ZetaFresh((cfg.zeta * n) as usize), "fresh")?;
    let star = read(InitialCondition::ZetaStar((cfg.zeta * n) as usize), "star")?;
    let fresh_start = zeta / (beta * cfg.lambda);
    let decay = (-cfg.alpha / beta * t).exp();
    let z0_gap = fresh.iter().map(|r| (r[0] - zeta).abs()).fold(0.0, f64::max);
    let mean_fresh = stats::mean(&column(&fresh, 1));
    let mean_star = stats::mean(&column(&star, 1));
    ctx.row("fresh_initial_gap", z0_gap, 0.0, Some(n), reps);
    ctx.row("fresh_mean_Z", mean_fresh, f64::INFINITY, Some(n), reps);
    ctx.row(
        "fresh_rel_error_vs_feller_mean",
        (mean_fresh - fresh_start * decay).abs() / (fresh_start * decay),
        0.1,
        Some(n),
        reps,
    );
    ctx.row(
        "fresh_rel_error_vs_restart_level",
        (mean_fresh - fresh_start).abs() / fresh_start,
        0.1,
        Some(n),
        reps,
    );
    ctx.row("stationary_residual_mean_Z", mean_star, f64::INFINITY, Some(n), reps);
    ctx.row(
        "stationary_residual_rel_error",
        (mean_star - zeta * decay).abs() / (zeta * decay),
        f64::INFINITY,
        Some(n),
        reps,
    );
    Ok(())
}
