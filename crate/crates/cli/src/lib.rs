//! Config-driven runner: parse a TOML config, run the selected experiments,
//! write `report.csv` (and optionally ECDF data), print one line per experiment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use excursion_lab::verify::report::{SamplePair, CSV_HEADER};
use excursion_lab::verify::stats::ecdf;
use excursion_lab::verify::{run_experiment, ExperimentConfig, ExperimentId, TestReport, VerifyError};
use excursion_lab::Family;
use serde::Deserialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{id}: {source}")]
    Run { id: ExperimentId, source: VerifyError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Config(_) => EXIT_CONFIG,
            CliError::Run {
                source: VerifyError::Config(_),
                ..
            } => EXIT_CONFIG,
            CliError::Write { .. } | CliError::Run { .. } => EXIT_FAILED,
        }
    }
}

/// Keys that can be set at top level (all experiments) or in an `[E*]` section.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub family: Option<String>,
    pub n_ladder: Option<Vec<u32>>,
    pub replications: Option<usize>,
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

/// Unknown top-level keys land in `sections` and are rejected there.
#[derive(Debug, Deserialize)]
struct RawConfig {
    experiment: OneOrMany,
    seed: u64,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    ecdf: bool,
    lambda: Option<f64>,
    alpha: Option<f64>,
    family: Option<String>,
    n_ladder: Option<Vec<u32>>,
    replications: Option<usize>,
    eps: Option<f64>,
    dt: Option<f64>,
    #[serde(flatten)]
    sections: BTreeMap<String, Overrides>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub experiments: Vec<ExperimentId>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub ecdf: bool,
    pub global: Overrides,
    pub sections: BTreeMap<ExperimentId, Overrides>,
}

impl Config {
    /// Parses config text. Relative `out_dir` is kept as written.
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        let names = match raw.experiment {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        };
        if names.is_empty() {
            return Err(CliError::Config("`experiment` lists no experiments".into()));
        }
        let parse_id = |s: &str| {
            ExperimentId::parse(s).ok_or_else(|| CliError::Config(format!("unknown experiment `{s}`")))
        };
        let experiments = names.iter().map(|s| parse_id(s)).collect::<Result<Vec<_>, _>>()?;
        let mut sections = BTreeMap::new();
        for (name, o) in raw.sections {
            sections.insert(parse_id(&name)?, o);
        }
        if raw.workers == Some(0) {
            return Err(CliError::Config("`workers` must be at least 1".into()));
        }
        Ok(Config {
            experiments,
            seed: raw.seed,
            out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            workers: raw.workers,
            ecdf: raw.ecdf,
            global: Overrides {
                lambda: raw.lambda,
                alpha: raw.alpha,
                family: raw.family,
                n_ladder: raw.n_ladder,
                replications: raw.replications,
                eps: raw.eps,
                dt: raw.dt,
                seed: None,
            },
            sections,
        })
    }

    /// Catalog defaults for `id`, then top-level keys, then the `[id]` section.
    pub fn experiment_config(&self, id: ExperimentId) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::defaults(id);
        cfg.seed = self.seed;
        apply(&mut cfg, &self.global)?;
        if let Some(o) = self.sections.get(&id) {
            apply(&mut cfg, o)?;
        }
        Ok(cfg)
    }
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<(), CliError> {
    if let Some(v) = o.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(name) = &o.family {
        cfg.family = Family::parse(name).ok_or_else(|| CliError::Config(format!("unknown family `{name}`")))?;
    }
    if let Some(v) = &o.n_ladder {
        cfg.n_ladder = v.clone();
    }
    if let Some(v) = o.replications {
        cfg.replications = v;
    }
    if let Some(v) = o.eps {
        cfg.eps = v;
    }
    if let Some(v) = o.dt {
        cfg.dt = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    Ok(())
}

/// `side,x,ecdf` rows for both samples of a pair.
pub fn ecdf_csv(pair: &SamplePair) -> String {
    let mut out = String::from("side,x,ecdf\n");
    for (side, xs) in [("left", &pair.left), ("right", &pair.right)] {
        for (x, f) in ecdf(xs) {
            let _ = writeln!(out, "{side},{x},{f}");
        }
    }
    out
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs every selected experiment and writes outputs under `out_dir`.
/// Returns whether all report rows passed.
pub fn execute(cfg: &Config, out_dir: &Path, log: &mut dyn Write) -> Result<bool, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p).map_err(|source| CliError::Write {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(out_dir)?;

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut all_pass = true;
    for &id in &cfg.experiments {
        let ecfg = cfg.experiment_config(id)?;
        let started = Instant::now();
        let rep: TestReport = pool
            .install(|| run_experiment(id, &ecfg))
            .map_err(|source| CliError::Run { id, source })?;
        let gated: Vec<_> = rep.rows.iter().filter(|r| !r.is_informational()).collect();
        let passed = gated.iter().filter(|r| r.pass).count();
        let verdict = if rep.pass() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            log,
            "{id} {verdict} {passed}/{} gated rows, {} rows ({:.1?}): {}",
            gated.len(),
            rep.rows.len(),
            started.elapsed(),
            id.description()
        );
        all_pass &= rep.pass();
        csv.push_str(rep.to_csv().split_once('\n').map_or("", |(_, rows)| rows));
        if cfg.ecdf && !rep.samples.is_empty() {
            let dir = out_dir.join("ecdf");
            mkdir(&dir)?;
            for pair in &rep.samples {
                write_file(&dir.join(format!("{}.csv", pair.name)), &ecdf_csv(pair))?;
            }
        }
    }
    write_file(&out_dir.join("report.csv"), &csv)?;
    Ok(all_pass)
}

/// Reads and runs a config file; relative `out_dir` resolves against the
/// config's directory. Returns the process exit code.
pub fn execute_config(path: &Path) -> i32 {
    let run = || -> Result<bool, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Config::parse(&text)?;
        let out_dir = if cfg.out_dir.is_absolute() {
            cfg.out_dir.clone()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(&cfg.out_dir)
        };
        execute(&cfg, &out_dir, &mut std::io::stdout())
    };
    match run() {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// One line per experiment: label and what it checks.
pub fn catalog() -> String {
    ExperimentId::ALL
        .iter()
        .map(|id| format!("{id}  {}\n", id.description()))
        .collect()
}
