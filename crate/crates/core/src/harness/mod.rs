//! Experiment orchestration: configuration, per-trial seeding, the five
//! experiments and CSV emission.
//!
//! Every CSV starts with a block of `# key=value` comment lines recording
//! the configuration and summary results, followed by a mandatory header
//! row. The first comment line is `# generated_unix=<seconds>` when a
//! timestamp is requested; it is the only non-deterministic byte range.

mod ablation;
mod bounds;
mod collapse;
mod residual;
mod sweep;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

pub use ablation::run_affine_ablation;
pub use bounds::{perturbation_lemma, run_verify_bounds};
pub use collapse::{run_collapse_hist, select_temperature, TemperatureChoice};
pub use residual::{control_matrix, run_residual_depth, trap_matrix};
pub use sweep::run_sweep_temp;

use crate::dsm::{self, SinkhornConfig, StochasticMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_trial_seed, StreamRole, MAX_REP_INDEX};

pub const TIMESTAMP_KEY: &str = "generated_unix";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    SweepTemp,
    CollapseHist,
    AffineAblation,
    VerifyBounds,
    ResidualDepth,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::SweepTemp,
        Experiment::CollapseHist,
        Experiment::AffineAblation,
        Experiment::VerifyBounds,
        Experiment::ResidualDepth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SweepTemp => "sweep_temp",
            Experiment::CollapseHist => "collapse_hist",
            Experiment::AffineAblation => "affine_ablation",
            Experiment::VerifyBounds => "verify_bounds",
            Experiment::ResidualDepth => "residual_depth",
        }
    }

    pub fn default_file_name(self) -> &'static str {
        match self {
            Experiment::SweepTemp => "sigma2_vs_temp.csv",
            Experiment::CollapseHist => "collapse_hist.csv",
            Experiment::AffineAblation => "affine_ablation.csv",
            Experiment::VerifyBounds => "bounds_audit.csv",
            Experiment::ResidualDepth => "residual_depth.csv",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Which SNR regime the collapse experiment targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Low,
    High,
}

/// Cost matrices for Sinkhorn generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostMode {
    Random,
    /// All-zero cost: the kernel is constant and Sinkhorn returns `U`.
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub nu: f64,
    pub seeds: Vec<u32>,
    pub reps: u32,
    pub iterations: usize,
    pub temperatures: Vec<f64>,
    /// Single temperature for the Perron batch.
    pub temperature: f64,
    pub cost: CostMode,
    pub eps: f64,
    pub transient_depth: usize,
    pub depth: usize,
    pub collapse_depth: usize,
    pub trials: usize,
    pub initial_cosine: f64,
    pub signal_norm: f64,
    pub gamma_target: f64,
    pub high_gamma: f64,
    pub regime: Regime,
    pub gains: Vec<f64>,
    pub beta: f64,
    pub trap_sigma2: f64,
    pub control_sigma2: f64,
    pub drift_threshold: f64,
    pub bound_scale: f64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 64,
            nu: 0.1,
            seeds: (0..10).collect(),
            reps: 100,
            iterations: 200,
            temperatures: vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
            temperature: 1.0,
            cost: CostMode::Random,
            eps: 0.01,
            transient_depth: 0,
            depth: 100,
            collapse_depth: 1,
            trials: 10_000,
            initial_cosine: 0.99,
            signal_norm: 1.0,
            gamma_target: 0.1,
            high_gamma: 4.0,
            regime: Regime::Low,
            gains: vec![0.5, 1.0, 2.0],
            beta: 0.0,
            trap_sigma2: 0.05,
            control_sigma2: 0.9,
            drift_threshold: 0.5,
            bound_scale: 1.0,
            output: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

/// Comma-separated seeds; `a-b` is an inclusive range.
fn parse_seeds(value: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (parse_num("seeds", a)?, parse_num("seeds", b)?);
                if a > b {
                    return Err(Error::Config(format!("empty seed range '{part}'")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num("seeds", part)?),
        }
    }
    Ok(out)
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 25] = [
        "n", "nu", "seeds", "reps", "iterations", "temperatures", "temperature", "cost", "eps",
        "transient_depth", "depth", "collapse_depth", "trials", "initial_cosine", "signal_norm",
        "gamma_target", "high_gamma", "regime", "gains", "beta", "trap_sigma2", "control_sigma2",
        "drift_threshold", "bound_scale", "output",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "n" => self.n = parse_num(key, v)?,
            "nu" => self.nu = parse_num(key, v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "reps" => self.reps = parse_num(key, v)?,
            "iterations" => self.iterations = parse_num(key, v)?,
            "temperatures" => self.temperatures = parse_list(key, v)?,
            "temperature" => self.temperature = parse_num(key, v)?,
            "cost" => {
                self.cost = match v {
                    "random" => CostMode::Random,
                    "constant" => CostMode::Constant,
                    _ => return Err(Error::Config(format!("cost must be random or constant, got '{v}'"))),
                }
            }
            "eps" => self.eps = parse_num(key, v)?,
            "transient_depth" => self.transient_depth = parse_num(key, v)?,
            "depth" => self.depth = parse_num(key, v)?,
            "collapse_depth" => self.collapse_depth = parse_num(key, v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "initial_cosine" => self.initial_cosine = parse_num(key, v)?,
            "signal_norm" => self.signal_norm = parse_num(key, v)?,
            "gamma_target" => self.gamma_target = parse_num(key, v)?,
            "high_gamma" => self.high_gamma = parse_num(key, v)?,
            "regime" => {
                self.regime = match v {
                    "low" => Regime::Low,
                    "high" => Regime::High,
                    _ => return Err(Error::Config(format!("regime must be low or high, got '{v}'"))),
                }
            }
            "gains" => self.gains = parse_list(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "trap_sigma2" => self.trap_sigma2 = parse_num(key, v)?,
            "control_sigma2" => self.control_sigma2 = parse_num(key, v)?,
            "drift_threshold" => self.drift_threshold = parse_num(key, v)?,
            "bound_scale" => self.bound_scale = parse_num(key, v)?,
            "output" => self.output = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Flat `key = value` text. `#` starts a comment; blank lines are
    /// ignored; later assignments win.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.reps == 0 || self.reps >= MAX_REP_INDEX {
            return bad(format!("reps must lie in 1..{MAX_REP_INDEX}, got {}", self.reps));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return bad(format!("nu must be finite and >= 0, got {}", self.nu));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.temperatures.is_empty() || self.temperatures.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("temperatures must be a non-empty list of positive values".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidEpsilon(self.eps));
        }
        if self.depth == 0 || self.collapse_depth == 0 {
            return bad("depths must be positive".into());
        }
        if !(-1.0..=1.0).contains(&self.initial_cosine) {
            return bad(format!("initial_cosine must lie in [-1, 1], got {}", self.initial_cosine));
        }
        if !(self.signal_norm > 0.0) {
            return bad("signal_norm must be positive".into());
        }
        if !(self.bound_scale > 0.0) {
            return bad("bound_scale must be positive".into());
        }
        if !(0.0..1.0).contains(&self.trap_sigma2) || !(0.0..1.0).contains(&self.control_sigma2) {
            return bad("trap_sigma2 and control_sigma2 must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn total_trials(&self) -> usize {
        self.seeds.len() * self.reps as usize
    }

    /// `(base_seed, rep_index)` in emission order.
    pub fn trial_keys(&self) -> Vec<(u32, u32)> {
        self.seeds.iter().flat_map(|&s| (0..self.reps).map(move |r| (s, r))).collect()
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("n".to_string(), self.n.to_string()),
            ("nu".into(), self.nu.to_string()),
            ("seeds".into(), join(&self.seeds)),
            ("reps".into(), self.reps.to_string()),
            ("iterations".into(), self.iterations.to_string()),
            ("temperatures".into(), join(&self.temperatures)),
            ("temperature".into(), self.temperature.to_string()),
            ("cost".into(), if self.cost == CostMode::Random { "random" } else { "constant" }.into()),
            ("eps".into(), self.eps.to_string()),
            ("transient_depth".into(), self.transient_depth.to_string()),
            ("depth".into(), self.depth.to_string()),
            ("collapse_depth".into(), self.collapse_depth.to_string()),
            ("trials".into(), self.trials.to_string()),
            ("initial_cosine".into(), self.initial_cosine.to_string()),
            ("signal_norm".into(), self.signal_norm.to_string()),
            ("gamma_target".into(), self.gamma_target.to_string()),
            ("high_gamma".into(), self.high_gamma.to_string()),
            ("regime".into(), if self.regime == Regime::Low { "low" } else { "high" }.into()),
            ("gains".into(), join(&self.gains)),
            ("beta".into(), self.beta.to_string()),
            ("trap_sigma2".into(), self.trap_sigma2.to_string()),
            ("control_sigma2".into(), self.control_sigma2.to_string()),
            ("drift_threshold".into(), self.drift_threshold.to_string()),
            ("bound_scale".into(), self.bound_scale.to_string()),
        ];
        if let Some(p) = &self.output {
            out.push(("output".into(), p.display().to_string()));
        }
        out
    }

    /// The DSM for one trial at temperature `t`.
    pub fn trial_matrix(&self, seed: u32, rep: u32, t: f64) -> Result<StochasticMatrix> {
        let cfg = SinkhornConfig {
            n: self.n,
            temperature: t,
            iterations: self.iterations,
            seed: derive_trial_seed(seed, rep, StreamRole::Cost),
        };
        match self.cost {
            CostMode::Random => dsm::sinkhorn_generate(&cfg),
            CostMode::Constant => {
                cfg.validate()?;
                dsm::sinkhorn_from_cost(&crate::linalg::DenseMatrix::zeros(self.n, self.n), t, self.iterations)
            }
        }
    }
}

/// Rows plus metadata for one experiment run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub experiment: Experiment,
    pub header: Vec<(String, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Failed invariants or bounds; non-empty means exit code 2.
    pub violations: Vec<String>,
}

impl ExperimentOutput {
    fn new(experiment: Experiment, cfg: &ExperimentConfig, columns: Vec<&'static str>) -> Self {
        let mut header = vec![("experiment".to_string(), experiment.name().to_string())];
        header.extend(cfg.entries());
        ExperimentOutput { experiment, header, columns, rows: Vec::new(), violations: Vec::new() }
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    pub fn write<W: Write>(&self, mut out: W, timestamp: Option<u64>) -> Result<()> {
        if let Some(ts) = timestamp {
            writeln!(out, "# {TIMESTAMP_KEY}={ts}")?;
        }
        for (k, v) in &self.header {
            writeln!(out, "# {k}={v}")?;
        }
        for v in &self.violations {
            writeln!(out, "# violation={v}")?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, timestamp: Option<u64>) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf, timestamp).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Drops the timestamp comment so reruns can be compared byte for byte.
pub fn strip_timestamp(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with(&format!("# {TIMESTAMP_KEY}=")))
        .map(|l| format!("{l}\n"))
        .collect()
}

pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match experiment {
        Experiment::SweepTemp => run_sweep_temp(cfg),
        Experiment::CollapseHist => run_collapse_hist(cfg),
        Experiment::AffineAblation => run_affine_ablation(cfg),
        Experiment::VerifyBounds => run_verify_bounds(cfg),
        Experiment::ResidualDepth => run_residual_depth(cfg),
    }
}

/// Maps trials concurrently and returns results in input order.
fn par_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    items.par_iter().map(f).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(dsm::fmt_f64).unwrap_or_default()
}
