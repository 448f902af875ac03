//! Report rows and their CSV form.

use std::fmt::Write as _;

/// One checked statistic. `pass` is `value <= threshold`; rows with an
/// infinite threshold are informational.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub statistic: String,
    pub value: f64,
    pub threshold: f64,
    /// Heavy-traffic index, when the row belongs to one.
    pub n: Option<u32>,
    pub reps: usize,
    pub seed: u64,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(
        experiment: &str,
        statistic: impl Into<String>,
        value: f64,
        threshold: f64,
        n: Option<u32>,
        reps: usize,
        seed: u64,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            statistic: statistic.into(),
            value,
            threshold,
            n,
            reps,
            seed,
            // NaN values fail.
            pass: value <= threshold,
        }
    }

    pub fn is_informational(&self) -> bool {
        self.threshold == f64::INFINITY
    }
}

/// Two samples compared by a distributional test, kept for ECDF output.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub name: String,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TestReport {
    pub rows: Vec<ReportRow>,
    pub samples: Vec<SamplePair>,
}

pub const CSV_HEADER: &str = "experiment,statistic,value,threshold,n,reps,seed,pass";

impl TestReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn extend(&mut self, other: TestReport) {
        self.rows.extend(other.rows);
        self.samples.extend(other.samples);
    }

    pub fn find(&self, statistic: &str, n: Option<u32>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.statistic == statistic && r.n == n)
    }

    /// CSV with header; values use shortest round-trip formatting, so equal
    /// reports give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let n = r.n.map_or_else(|| "-".to_string(), |n| n.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.experiment, r.statistic, r.value, r.threshold, n, r.reps, r.seed, r.pass
            );
        }
        out
    }
}
