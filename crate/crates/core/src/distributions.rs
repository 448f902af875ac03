//! Service and lifetime laws with closed-form moments, transforms and
//! forward recurrence (stationary residual) laws, plus the heavy-traffic
//! families built from them.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("forward recurrence of a forward recurrence law is not supported")]
    NestedResidual,
    #[error("index n = {n} must exceed alpha = {alpha} so that the load stays below 1")]
    Overloaded { n: f64, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Exponential { mean: f64 },
    Deterministic { value: f64 },
    Uniform { low: f64, high: f64 },
    TwoPoint { low: f64, high: f64, p_low: f64 },
    /// Forward recurrence law of a uniform or two-point base.
    Residual(Box<Kind>),
}

/// A positive law with finite second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceDist {
    kind: Kind,
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), DistError> {
    if ok {
        Ok(())
    } else {
        Err(DistError::Param(what()))
    }
}

impl ServiceDist {
    pub fn exponential(mean: f64) -> Result<Self, DistError> {
        check(mean > 0.0 && mean.is_finite(), || format!("exponential mean {mean}"))?;
        Ok(Self {
            kind: Kind::Exponential { mean },
        })
    }

    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        check(value > 0.0 && value.is_finite(), || format!("deterministic value {value}"))?;
        Ok(Self {
            kind: Kind::Deterministic { value },
        })
    }

    /// Uniform on `[low, high]`, `0 <= low < high`.
    pub fn uniform(low: f64, high: f64) -> Result<Self, DistError> {
        check(0.0 <= low && low < high && high.is_finite(), || {
            format!("uniform bounds [{low}, {high}]")
        })?;
        Ok(Self {
            kind: Kind::Uniform { low, high },
        })
    }

    /// `low` with probability `p_low`, else `high`; `0 < low < high`.
    pub fn two_point(low: f64, high: f64, p_low: f64) -> Result<Self, DistError> {
        check(
            0.0 < low && low < high && high.is_finite() && 0.0 < p_low && p_low < 1.0,
            || format!("two-point law ({low}, {high}, p_low = {p_low})"),
        )?;
        Ok(Self {
            kind: Kind::TwoPoint { low, high, p_low },
        })
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            Kind::Exponential { .. } => "exponential",
            Kind::Deterministic { .. } => "deterministic",
            Kind::Uniform { .. } => "uniform",
            Kind::TwoPoint { .. } => "two-point",
            Kind::Residual(_) => "forward-recurrence",
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, Kind::Deterministic { .. } | Kind::TwoPoint { .. })
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn second_moment(&self) -> f64 {
        self.moment(2)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    /// `E S^k`.
    pub fn moment(&self, k: u32) -> f64 {
        kind_moment(&self.kind, k)
    }

    /// `E e^{-s S}` for real `s`; `+inf` where the transform diverges.
    pub fn laplace(&self, s: f64) -> f64 {
        kind_laplace(&self.kind, s)
    }

    /// `E e^{θ S}`.
    pub fn mgf(&self, theta: f64) -> f64 {
        self.laplace(-theta)
    }

    /// `E(1 - e^{-s S})`, accurate for small `s`.
    pub fn one_minus_laplace(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let scale = self.moment(2).sqrt().max(self.upper_bound_hint());
        if (s * scale).abs() < 0.1 {
            // Alternating moment series; terms shrink at least like 0.1^k.
            let mut acc = 0.0;
            let mut fact = 1.0;
            for k in 1..=24u32 {
                fact *= f64::from(k);
                let term = s.powi(k as i32) * self.moment(k) / fact;
                acc += if k % 2 == 1 { term } else { -term };
            }
            return acc;
        }
        match self.kind {
            Kind::Exponential { mean } => mean * s / (1.0 + mean * s),
            Kind::Deterministic { value } => -(-s * value).exp_m1(),
            _ => 1.0 - self.laplace(s),
        }
    }

    fn upper_bound_hint(&self) -> f64 {
        match &self.kind {
            Kind::Exponential { mean } => *mean,
            Kind::Deterministic { value } => *value,
            Kind::Uniform { high, .. } | Kind::TwoPoint { high, .. } => *high,
            Kind::Residual(b) => ServiceDist { kind: (**b).clone() }.upper_bound_hint(),
        }
    }

    /// Law with density `P(S >= x) / E S`.
    pub fn forward_recurrence(&self) -> Result<ServiceDist, DistError> {
        let kind = match &self.kind {
            Kind::Exponential { .. } => self.kind.clone(),
            Kind::Deterministic { value } => Kind::Uniform {
                low: 0.0,
                high: *value,
            },
            Kind::Uniform { .. } | Kind::TwoPoint { .. } => Kind::Residual(Box::new(self.kind.clone())),
            Kind::Residual(_) => return Err(DistError::NestedResidual),
        };
        Ok(ServiceDist { kind })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            Kind::Deterministic { value } => *value,
            Kind::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Kind::TwoPoint { low, high, p_low } => {
                if rng.random::<f64>() < *p_low {
                    *low
                } else {
                    *high
                }
            }
            Kind::Residual(base) => residual_quantile(base, rng.random::<f64>()),
        }
    }

    /// CDF, used by goodness-of-fit checks.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Exponential { mean } => -(-x / mean).exp_m1(),
            Kind::Deterministic { value } => f64::from(u8::from(x >= *value)),
            Kind::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Kind::TwoPoint { low, high, p_low } => {
                if x >= *high {
                    1.0
                } else if x >= *low {
                    *p_low
                } else {
                    0.0
                }
            }
            Kind::Residual(base) => residual_cdf(base, x),
        }
    }
}

fn kind_moment(kind: &Kind, k: u32) -> f64 {
    let kf = f64::from(k);
    match kind {
        Kind::Exponential { mean } => (1..=k).map(f64::from).product::<f64>() * mean.powi(k as i32),
        Kind::Deterministic { value } => value.powi(k as i32),
        Kind::Uniform { low, high } => {
            (high.powi(k as i32 + 1) - low.powi(k as i32 + 1)) / ((kf + 1.0) * (high - low))
        }
        Kind::TwoPoint { low, high, p_low } => {
            p_low * low.powi(k as i32) + (1.0 - p_low) * high.powi(k as i32)
        }
        Kind::Residual(base) => kind_moment(base, k + 1) / ((kf + 1.0) * kind_moment(base, 1)),
    }
}

fn kind_laplace(kind: &Kind, s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    match kind {
        Kind::Exponential { mean } => {
            let d = 1.0 + mean * s;
            if d <= 0.0 {
                f64::INFINITY
            } else {
                1.0 / d
            }
        }
        Kind::Deterministic { value } => (-s * value).exp(),
        Kind::Uniform { low, high } => ((-s * low).exp() - (-s * high).exp()) / (s * (high - low)),
        Kind::TwoPoint { low, high, p_low } => {
            p_low * (-s * low).exp() + (1.0 - p_low) * (-s * high).exp()
        }
        Kind::Residual(base) => (1.0 - kind_laplace(base, s)) / (s * kind_moment(base, 1)),
    }
}

fn residual_cdf(base: &Kind, x: f64) -> f64 {
    let m = kind_moment(base, 1);
    match *base {
        Kind::Uniform { low, high } => {
            if x <= low {
                x / m
            } else if x < high {
                let w = high - low;
                (low + (w * w - (high - x) * (high - x)) / (2.0 * w)) / m
            } else {
                1.0
            }
        }
        Kind::TwoPoint { low, high, p_low } => {
            if x <= low {
                x / m
            } else if x < high {
                (low + (1.0 - p_low) * (x - low)) / m
            } else {
                1.0
            }
        }
        _ => unreachable!("residual base is uniform or two-point"),
    }
}

fn residual_quantile(base: &Kind, u: f64) -> f64 {
    let m = kind_moment(base, 1);
    let um = u * m;
    match *base {
        Kind::Uniform { low, high } => {
            if um <= low {
                um
            } else {
                let w = high - low;
                high - (w * w - 2.0 * w * (um - low)).max(0.0).sqrt()
            }
        }
        Kind::TwoPoint { low, p_low, .. } => {
            if um <= low {
                um
            } else {
                low + (um - low) / (1.0 - p_low)
            }
        }
        _ => unreachable!("residual base is uniform or two-point"),
    }
}

/// Shape of the service law in a heavy-traffic family, independent of scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential,
    Deterministic,
    /// Uniform on `mean · [1 - spread, 1 + spread]`, `spread` in `(0, 1]`.
    Uniform { spread: f64 },
    /// Values `low_ratio · h` and `h` (with `h` fixed by the mean), the
    /// smaller one with probability `p_low`.
    TwoPoint { p_low: f64, low_ratio: f64 },
}

impl Family {
    pub fn parse(name: &str) -> Option<Family> {
        match name {
            "exponential" => Some(Family::Exponential),
            "deterministic" => Some(Family::Deterministic),
            "uniform" => Some(Family::Uniform { spread: 1.0 }),
            "two-point" => Some(Family::TwoPoint {
                p_low: 0.5,
                low_ratio: 0.25,
            }),
            _ => None,
        }
    }

    /// `E S² / (E S)²`.
    pub fn squared_mean_ratio(&self) -> f64 {
        match *self {
            Family::Exponential => 2.0,
            Family::Deterministic => 1.0,
            Family::Uniform { spread } => 1.0 + spread * spread / 3.0,
            Family::TwoPoint { p_low, low_ratio } => {
                let m = p_low * low_ratio + 1.0 - p_low;
                (p_low * low_ratio * low_ratio + 1.0 - p_low) / (m * m)
            }
        }
    }

    /// The law of this shape with the given mean.
    pub fn with_mean(&self, mean: f64) -> Result<ServiceDist, DistError> {
        match *self {
            Family::Exponential => ServiceDist::exponential(mean),
            Family::Deterministic => ServiceDist::deterministic(mean),
            Family::Uniform { spread } => {
                check(spread > 0.0 && spread <= 1.0, || format!("uniform spread {spread}"))?;
                ServiceDist::uniform(mean * (1.0 - spread), mean * (1.0 + spread))
            }
            Family::TwoPoint { p_low, low_ratio } => {
                check(low_ratio > 0.0 && low_ratio < 1.0, || format!("two-point ratio {low_ratio}"))?;
                let high = mean / (p_low * low_ratio + 1.0 - p_low);
                ServiceDist::two_point(low_ratio * high, high, p_low)
            }
        }
    }
}

/// Heavy-traffic family `λ_n = λ`, `E S_n = (1 - α/n)/λ`, so that
/// `n(1 - ρ_n) = α` exactly and `(λ/2) E S_n² → β`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub lambda: f64,
    pub alpha: f64,
    pub family: Family,
}

impl Regime {
    pub fn new(lambda: f64, alpha: f64, family: Family) -> Result<Self, DistError> {
        check(lambda > 0.0 && lambda.is_finite(), || format!("lambda {lambda}"))?;
        check(alpha > 0.0 && alpha.is_finite(), || format!("alpha {alpha}"))?;
        family.with_mean(1.0)?;
        Ok(Self {
            lambda,
            alpha,
            family,
        })
    }

    /// `β = lim (λ_n/2) E S_n²`.
    pub fn beta(&self) -> f64 {
        self.family.squared_mean_ratio() / (2.0 * self.lambda)
    }

    pub fn lambda_n(&self, _n: f64) -> f64 {
        self.lambda
    }

    fn check_index(&self, n: f64) -> Result<(), DistError> {
        if n > self.alpha {
            Ok(())
        } else {
            Err(DistError::Overloaded { n, alpha: self.alpha })
        }
    }

    pub fn service(&self, n: f64) -> Result<ServiceDist, DistError> {
        self.check_index(n)?;
        self.family.with_mean((1.0 - self.alpha / n) / self.lambda)
    }

    /// `ρ_n = λ_n E S_n`.
    pub fn rho(&self, n: f64) -> Result<f64, DistError> {
        self.check_index(n)?;
        Ok(1.0 - self.alpha / n)
    }

    /// `Ψ_n(u) = n u - n² λ_n E(1 - e^{-u S_n / n})`.
    pub fn laplace_exponent(&self, n: f64, u: f64) -> Result<f64, DistError> {
        let s = self.service(n)?;
        Ok(n * u - n * n * self.lambda_n(n) * s.one_minus_laplace(u / n))
    }

    /// Limit exponent `α u + β u²`.
    pub fn limit_exponent(&self, u: f64) -> f64 {
        self.alpha * u + self.beta() * u * u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn all_laws() -> Vec<ServiceDist> {
        vec![
            ServiceDist::exponential(1.3).unwrap(),
            ServiceDist::deterministic(0.7).unwrap(),
            ServiceDist::uniform(0.2, 1.4).unwrap(),
            ServiceDist::uniform(0.0, 2.0).unwrap(),
            ServiceDist::two_point(0.25, 2.0, 0.6).unwrap(),
        ]
    }

    #[test]
    fn forward_recurrence_examples() {
        let e = ServiceDist::exponential(1.0).unwrap();
        assert_eq!(e.forward_recurrence().unwrap(), e);
        assert_eq!(e.forward_recurrence().unwrap().mean(), 1.0);
        let d = ServiceDist::deterministic(2.0).unwrap();
        let r = d.forward_recurrence().unwrap();
        assert_eq!(r, ServiceDist::uniform(0.0, 2.0).unwrap());
        assert_eq!(r.mean(), 1.0);
    }

    #[test]
    fn forward_recurrence_mean_formula() {
        for d in all_laws() {
            let r = d.forward_recurrence().unwrap();
            let want = d.second_moment() / (2.0 * d.mean());
            assert!((r.mean() - want).abs() < 1e-14 * want, "{}", d.name());
        }
    }

    #[test]
    fn residual_cdf_inverts_quantile() {
        for d in [
            ServiceDist::uniform(0.2, 1.4).unwrap(),
            ServiceDist::two_point(0.25, 2.0, 0.6).unwrap(),
        ] {
            let Kind::Residual(base) = d.forward_recurrence().unwrap().kind else {
                panic!()
            };
            for i in 0..=100 {
                let u = f64::from(i) / 100.0;
                let x = residual_quantile(&base, u);
                assert!((residual_cdf(&base, x) - u).abs() < 1e-12, "u={u}");
            }
        }
    }

    #[test]
    fn residual_density_integrates_survival() {
        // Independent check: numerically integrate P(S >= y)/E S.
        let d = ServiceDist::uniform(0.2, 1.4).unwrap();
        let r = d.forward_recurrence().unwrap();
        let m = d.mean();
        let steps = 200_000;
        let x_max = 1.0;
        let h = x_max / f64::from(steps);
        let num: f64 = (0..steps)
            .map(|i| (1.0 - d.cdf((f64::from(i) + 0.5) * h)) * h / m)
            .sum();
        assert!((num - r.cdf(x_max)).abs() < 1e-9);
    }

    #[test]
    fn laplace_matches_moment_series() {
        for d in all_laws() {
            for &s in &[0.05, 0.5, 2.0] {
                let direct = 1.0 - d.laplace(s);
                let stable = d.one_minus_laplace(s);
                assert!((direct - stable).abs() < 1e-12, "{} s={s}: {direct} vs {stable}", d.name());
            }
            // Where the closed form cancels, compare with a short Taylor expansion.
            for &s in &[1e-6, 1e-5] {
                let taylor = s * d.mean() - s * s * d.second_moment() / 2.0 + s.powi(3) * d.moment(3) / 6.0;
                let stable = d.one_minus_laplace(s);
                assert!((taylor - stable).abs() < 1e-12 * stable, "{} s={s}", d.name());
            }
            let r = d.forward_recurrence().unwrap();
            assert!((r.laplace(0.3) - (1.0 - d.laplace(0.3)) / (0.3 * d.mean())).abs() < 1e-15);
        }
    }

    #[test]
    fn sampler_moments_within_four_standard_errors() {
        let n = 100_000;
        let mut laws = all_laws();
        laws.extend(all_laws().iter().map(|d| d.forward_recurrence().unwrap()));
        for (i, d) in laws.iter().enumerate() {
            let mut rng = stream(11, "dist-moments", i as u64);
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let nf = n as f64;
            let m1 = xs.iter().sum::<f64>() / nf;
            let m2 = xs.iter().map(|x| x * x).sum::<f64>() / nf;
            let se1 = (d.variance() / nf).sqrt();
            let se2 = ((d.moment(4) - d.moment(2).powi(2)).max(0.0) / nf).sqrt();
            assert!((m1 - d.mean()).abs() <= 4.0 * se1 + 1e-9, "{} mean", d.name());
            assert!((m2 - d.second_moment()).abs() <= 4.0 * se2 + 1e-9, "{} m2", d.name());
        }
    }

    #[test]
    fn regime_examples() {
        let r = Regime::new(1.0, 1.0, Family::Exponential).unwrap();
        assert_eq!(r.beta(), 1.0);
        assert!((r.rho(100.0).unwrap() - 0.99).abs() < 1e-15);
        let d = Regime::new(2.0, 1.0, Family::Deterministic).unwrap();
        assert_eq!(d.beta(), 0.25);
        assert_eq!(d.service(10.0).unwrap(), ServiceDist::deterministic(0.45).unwrap());
        assert!(matches!(r.service(1.0), Err(DistError::Overloaded { .. })));
        for n in [2.0, 7.0, 100.0, 1e4] {
            let rho = r.rho(n).unwrap();
            assert!((n * (1.0 - rho) - 1.0).abs() < 1e-9);
        }
        let u = Regime::new(1.0, 1.0, Family::Uniform { spread: 1.0 }).unwrap();
        let s = u.service(50.0).unwrap();
        assert!((u.lambda * s.second_moment() / 2.0 / (s.mean() * u.lambda).powi(2) - u.beta()).abs() < 1e-12);
    }

    #[test]
    fn laplace_exponent_examples() {
        let r = Regime::new(1.0, 1.0, Family::Exponential).unwrap();
        assert_eq!(r.laplace_exponent(100.0, 0.0).unwrap(), 0.0);
        let want = 100.0 - 100.0 * 0.99 / (1.0 + 0.0099);
        let got = r.laplace_exponent(100.0, 1.0).unwrap();
        assert!((got - want).abs() < 1e-10);
        assert!((got - 1.97049).abs() < 1e-5);
        for fam in [Family::Exponential, Family::Deterministic, Family::Uniform { spread: 0.5 }] {
            let r = Regime::new(1.5, 0.7, fam).unwrap();
            for u in [0.5, 1.0, 2.0] {
                let errs: Vec<f64> = [10.0, 100.0, 1e3, 1e4]
                    .iter()
                    .map(|&n| (r.laplace_exponent(n, u).unwrap() - r.limit_exponent(u)).abs())
                    .collect();
                assert!(errs.windows(2).all(|w| w[1] < w[0]), "{fam:?} u={u}: {errs:?}");
            }
        }
    }

    #[test]
    fn laplace_exponent_convex_increasing() {
        let r = Regime::new(1.0, 1.0, Family::TwoPoint { p_low: 0.5, low_ratio: 0.25 }).unwrap();
        for n in [5.0, 50.0] {
            let vals: Vec<f64> = (0..60)
                .map(|i| r.laplace_exponent(n, f64::from(i) * 0.1).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]));
            assert!(vals.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] > -1e-12));
        }
    }
}
