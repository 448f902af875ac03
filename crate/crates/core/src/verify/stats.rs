//! Goodness-of-fit statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("{0}")]
    Arg(String),
    #[error("only {0} events; at least 100 are needed")]
    Inconclusive(usize),
}

/// Asymptotic two-sample KS coefficient at level 0.01.
pub const KS_COEFFICIENT: f64 = 1.628;

/// `c · sqrt((N + M) / (N M))`.
pub fn ks_critical(n: usize, m: usize, c: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup |F_x - F_y|` of the empirical CDFs, exact (ties handled by advancing
/// both samples past a shared value before comparing).
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::Empty);
    }
    let (a, b) = (sorted(xs), sorted(ys));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    let a = sorted(xs);
    let n = a.len() as f64;
    Ok(a.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

/// Result of [`chi_square_gof`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    /// Buckets after merging.
    pub buckets: usize,
    /// Buckets were merged to reach the minimum expected count.
    pub merged: bool,
}

impl ChiSquare {
    pub fn degrees_of_freedom(&self) -> usize {
        self.buckets.saturating_sub(1)
    }

    /// Upper `level` quantile of the χ² law with this many degrees of freedom.
    pub fn quantile(&self, level: f64) -> f64 {
        chi_square_quantile(self.degrees_of_freedom(), level)
    }
}

pub fn chi_square_quantile(dof: usize, level: f64) -> f64 {
    ChiSquared::new(dof.max(1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(level)
}

/// Pearson statistic `Σ (obs - exp)² / exp`.
///
/// `probs` must sum to 1, so any tail mass goes in the last entry of both
/// slices. Adjacent buckets are merged from the right until each expects at least
/// `min_expected` observations.
pub fn chi_square_gof(counts: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquare, StatsError> {
    if counts.len() != probs.len() || counts.is_empty() {
        return Err(StatsError::Arg(format!(
            "{} counts vs {} probabilities",
            counts.len(),
            probs.len()
        )));
    }
    let psum: f64 = probs.iter().sum();
    if (psum - 1.0).abs() > 1e-9 {
        return Err(StatsError::Arg(format!("probabilities sum to {psum}")));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::Empty);
    }
    let n = total as f64;
    // Merge from the tail: low-probability buckets sit at the end.
    let mut buckets: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    let mut merged = false;
    for (&c, &p) in counts.iter().zip(probs).rev() {
        if e > 0.0 {
            merged = true;
        }
        o += c as f64;
        e += p * n;
        if e >= min_expected {
            buckets.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match buckets.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
                merged = true;
            }
            None => buckets.push((o, e)),
        }
    }
    let statistic = buckets
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else { 0.0 })
        .sum();
    Ok(ChiSquare {
        statistic,
        buckets: buckets.len(),
        merged,
    })
}

/// Components of [`poisson_process_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonCheck {
    pub events: usize,
    pub ks_gaps: f64,
    pub ks_threshold: f64,
    pub lag1_corr: f64,
    pub corr_threshold: f64,
    pub count_z: f64,
    pub count_threshold: f64,
}

impl PoissonCheck {
    pub fn pass(&self) -> bool {
        self.ks_gaps <= self.ks_threshold
            && self.lag1_corr.abs() <= self.corr_threshold
            && self.count_z.abs() <= self.count_threshold
    }
}

/// Composite check that sorted `times` in `[0, horizon]` look like a
/// Poisson(rate) process: gaps exponential (KS at level 0.01), lag-1 gap
/// correlation within `±4/√N`, count within 4 standard deviations of `rate · horizon`.
pub fn poisson_process_test(times: &[f64], rate: f64, horizon: f64) -> Result<PoissonCheck, StatsError> {
    if times.len() < 100 {
        return Err(StatsError::Inconclusive(times.len()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 || times[times.len() - 1] > horizon {
        return Err(StatsError::Arg("event times must be sorted within [0, horizon]".into()));
    }
    let gaps: Vec<f64> = std::iter::once(times[0])
        .chain(times.windows(2).map(|w| w[1] - w[0]))
        .collect();
    let n = gaps.len();
    let ks = ks_one_sample(&gaps, |x| -(-rate * x).exp_m1())?;
    let mean = gaps.iter().sum::<f64>() / n as f64;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>();
    let cov: f64 = gaps.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let corr = if var > 0.0 { cov / var } else { 1.0 };
    let expected = rate * horizon;
    Ok(PoissonCheck {
        events: n,
        ks_gaps: ks,
        ks_threshold: KS_COEFFICIENT / (n as f64).sqrt(),
        lag1_corr: corr,
        corr_threshold: 4.0 / (n as f64).sqrt(),
        count_z: (n as f64 - expected) / expected.sqrt(),
        count_threshold: 4.0,
    })
}

/// Empirical CDF as `(x, F(x))` pairs, one per distinct value.
pub fn ecdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let a = sorted(xs);
    let n = a.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in a.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    out
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}
