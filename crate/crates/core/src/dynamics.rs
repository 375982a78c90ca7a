//! Layered forward passes through a fixed mixing operator: plain mixing,
//! Layer-Norm mixing and residual blocks.

use std::io::Write;

use crate::dsm::{fmt_f64, StochasticMatrix};
use crate::error::{Error, Result};
use crate::geometry::{self, FeatureVector, Gain, NoiseModel};
use crate::linalg::{dot, mean, norm2, project_detail};
use crate::rng::TrialRng;
use crate::spectral;

pub const DEFAULT_DEPTH: usize = 100;
/// Additive slack on the per-layer contraction contracts.
pub const CONTRACT_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Ln,
    LnAffine,
    Residual,
    ResidualLn,
}

/// 1-Lipschitz activations with `φ(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, x: &mut [f64]) {
        if self == Activation::Relu {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerStackConfig {
    pub depth: usize,
    pub mixing: StochasticMatrix,
    pub noise: NoiseModel,
    pub mode: Mode,
    pub activation: Activation,
    pub affine_gamma: Gain,
    /// Shift of the affine Layer Norm; `None` means zero.
    pub affine_beta: Option<Vec<f64>>,
    pub project_residual_to_detail: bool,
}

impl LayerStackConfig {
    pub fn new(mixing: StochasticMatrix, noise: NoiseModel, mode: Mode) -> Self {
        LayerStackConfig {
            depth: DEFAULT_DEPTH,
            mixing,
            noise,
            mode,
            activation: Activation::Identity,
            affine_gamma: Gain::Scalar(1.0),
            affine_beta: None,
            project_residual_to_detail: true,
        }
    }

    pub fn n(&self) -> usize {
        self.mixing.n()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidParameter("depth must be at least 1".into()));
        }
        if self.noise.n() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: self.noise.n() });
        }
        Ok(())
    }

    fn check_input(&self, x: &FeatureVector) -> Result<()> {
        self.validate()?;
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        Ok(())
    }

    fn require_mode(&self, allowed: &[Mode]) -> Result<()> {
        if allowed.contains(&self.mode) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{:?} mode is not valid for this simulator", self.mode)))
        }
    }

    fn add_noise(&self, y: &mut [f64], rng: &mut TrialRng) {
        if self.noise.nu() > 0.0 {
            let xi = geometry::sample_noise(&self.noise, rng);
            y.iter_mut().zip(xi.values()).for_each(|(a, b)| *a += b);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryMetrics {
    /// `‖x_{ℓ,⊥}‖` for `ℓ = 0..=L`.
    pub detail_norm: Vec<f64>,
    /// `‖x_{ℓ+1} - x_ℓ‖ / ‖x_ℓ‖` for `ℓ = 0..L`.
    pub rel_update: Vec<f64>,
    /// Detail-subspace cosine of `x_ℓ` against `x_0`; `None` where either
    /// detail component vanishes.
    pub cos_to_init: Vec<Option<f64>>,
    /// Residual runs: `‖φ(M x_ℓ)‖` and `σ₂ ‖x_{ℓ,⊥}‖` per layer.
    pub update_norm: Vec<f64>,
    pub update_bound: Vec<f64>,
    /// Layers where `update_norm > update_bound + 1e-9`; `None` when the
    /// contract does not apply.
    pub contract_violations: Option<usize>,
    pub initial: Vec<f64>,
    pub last: Vec<f64>,
}

impl TrajectoryMetrics {
    fn start(x0: &[f64]) -> Self {
        let d0 = project_detail(x0);
        let n0 = norm2(&d0);
        TrajectoryMetrics {
            detail_norm: vec![n0],
            rel_update: Vec::new(),
            cos_to_init: vec![(n0 > 0.0).then_some(1.0)],
            update_norm: Vec::new(),
            update_bound: Vec::new(),
            contract_violations: None,
            initial: x0.to_vec(),
            last: x0.to_vec(),
        }
    }

    fn record(&mut self, next: Vec<f64>) {
        let step: Vec<f64> = next.iter().zip(&self.last).map(|(a, b)| a - b).collect();
        let prev = norm2(&self.last);
        let change = norm2(&step);
        self.rel_update.push(if change == 0.0 { 0.0 } else if prev == 0.0 { f64::INFINITY } else { change / prev });
        let d = project_detail(&next);
        self.detail_norm.push(norm2(&d));
        self.cos_to_init.push(detail_cosine(&self.initial, &next));
        self.last = next;
    }

    pub fn depth(&self) -> usize {
        self.rel_update.len()
    }
}

fn detail_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let da = project_detail(a);
    let db = project_detail(b);
    let (na, nb) = (norm2(&da), norm2(&db));
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot(&da, &db) / (na * nb)).clamp(-1.0, 1.0))
    }
}

/// `x_{ℓ+1} = M x_ℓ + ξ_ℓ`, noise omitted when `ν = 0`.
pub fn run_plain(cfg: &LayerStackConfig, x0: &FeatureVector, rng: &mut TrialRng) -> Result<TrajectoryMetrics> {
    cfg.check_input(x0)?;
    cfg.require_mode(&[Mode::Plain])?;
    let m = cfg.mixing.matrix();
    let mut metrics = TrajectoryMetrics::start(x0.values());
    for _ in 0..cfg.depth {
        let mut next = m.matvec(&metrics.last)?;
        cfg.add_noise(&mut next, rng);
        metrics.record(next);
    }
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedTrajectory {
    pub first: TrajectoryMetrics,
    pub second: TrajectoryMetrics,
    /// Detail-subspace cosine between the two states for `ℓ = 0..=L`.
    pub cross_cos: Vec<f64>,
}

impl PairedTrajectory {
    pub fn final_cosine(&self) -> f64 {
        *self.cross_cos.last().expect("at least the initial layer")
    }
}

fn ln_layer(cfg: &LayerStackConfig, x: &[f64], rng: &mut TrialRng) -> Result<Vec<f64>> {
    let mut y = cfg.mixing.matrix().matvec(x)?;
    cfg.add_noise(&mut y, rng);
    let y = FeatureVector::new(y);
    let out = match cfg.mode {
        Mode::Ln => geometry::layer_norm(&y)?,
        _ => match &cfg.affine_beta {
            Some(beta) => geometry::layer_norm_affine(&y, &cfg.affine_gamma, beta)?,
            None => geometry::layer_norm_affine(&y, &cfg.affine_gamma, &vec![0.0; y.len()])?,
        },
    };
    Ok(out.into_values())
}

/// Two inputs through `x ↦ LN(M x + ξ)` with independent noise streams.
pub fn run_ln_pair(
    cfg: &LayerStackConfig,
    x0: &FeatureVector,
    x0_prime: &FeatureVector,
    rng: &mut TrialRng,
    rng_prime: &mut TrialRng,
) -> Result<PairedTrajectory> {
    cfg.check_input(x0)?;
    cfg.check_input(x0_prime)?;
    cfg.require_mode(&[Mode::Ln, Mode::LnAffine])?;
    let mut first = TrajectoryMetrics::start(x0.values());
    let mut second = TrajectoryMetrics::start(x0_prime.values());
    let mut cross_cos = Vec::with_capacity(cfg.depth + 1);
    cross_cos.push(detail_cosine(x0.values(), x0_prime.values()).ok_or(Error::ZeroVector)?);
    for _ in 0..cfg.depth {
        let a = ln_layer(cfg, &first.last, rng)?;
        let b = ln_layer(cfg, &second.last, rng_prime)?;
        cross_cos.push(detail_cosine(&a, &b).ok_or(Error::DegenerateInput)?);
        first.record(a);
        second.record(b);
    }
    Ok(PairedTrajectory { first, second, cross_cos })
}

/// `x_{ℓ+1} = x_ℓ + φ(M x_ℓ) + ξ_ℓ`, re-projected onto the detail subspace
/// when `project_residual_to_detail` is set; `ResidualLn` normalizes the sum.
///
/// With `ν = 0` and projection on, each layer is checked against
/// `‖φ(M x_ℓ)‖ <= σ₂ ‖x_{ℓ,⊥}‖ + 1e-9`.
pub fn run_residual(cfg: &LayerStackConfig, x0: &FeatureVector, rng: &mut TrialRng) -> Result<TrajectoryMetrics> {
    cfg.check_input(x0)?;
    cfg.require_mode(&[Mode::Residual, Mode::ResidualLn])?;
    if cfg.project_residual_to_detail {
        let scale = x0.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if mean(x0.values()).abs() > 1e-12 * scale {
            return Err(Error::InvalidParameter("x0 must lie in the detail subspace".into()));
        }
    }
    let contract = cfg.project_residual_to_detail && cfg.noise.nu() == 0.0;
    let s2 = spectral::sigma2(&cfg.mixing)?;
    let m = cfg.mixing.matrix();
    let mut metrics = TrajectoryMetrics::start(x0.values());
    let mut violations = 0;
    for layer in 0..cfg.depth {
        let mut update = m.matvec(&metrics.last)?;
        cfg.activation.apply(&mut update);
        let un = norm2(&update);
        let bound = s2 * metrics.detail_norm[layer];
        if un > bound + CONTRACT_SLACK {
            violations += 1;
        }
        metrics.update_norm.push(un);
        metrics.update_bound.push(bound);
        cfg.add_noise(&mut update, rng);
        let mut next: Vec<f64> = metrics.last.iter().zip(&update).map(|(a, b)| a + b).collect();
        if cfg.project_residual_to_detail {
            next = project_detail(&next);
        }
        if cfg.mode == Mode::ResidualLn {
            next = geometry::layer_norm(&FeatureVector::new(next))?.into_values();
        }
        metrics.record(next);
    }
    metrics.contract_violations = contract.then_some(violations);
    Ok(metrics)
}

/// Rotation in radians of `x_L` against `x_0` within the detail subspace.
pub fn angular_drift(metrics: &TrajectoryMetrics) -> Result<f64> {
    let a = project_detail(&metrics.initial);
    let b = project_detail(&metrics.last);
    let (na, nb) = (norm2(&a), norm2(&b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput);
    }
    // 2 atan2(‖â - b̂‖, ‖â + b̂‖) stays accurate near 0 and π.
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x / na - y / nb).collect();
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x / na + y / nb).collect();
    Ok(2.0 * norm2(&diff).atan2(norm2(&sum)))
}

pub const TRAJECTORY_CSV_HEADER: [&str; 6] = ["trial", "layer", "detail_norm", "rel_update", "cos_to_init", "cross_cos"];

/// One row per layer; `rel_update` is the step into the layer and is blank
/// at layer 0, `cross_cos` is blank for unpaired runs.
pub fn write_trajectory_csv<W: Write>(
    runs: &[(usize, &TrajectoryMetrics, Option<&[f64]>)],
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRAJECTORY_CSV_HEADER)?;
    for &(trial, m, cross) in runs {
        for layer in 0..m.detail_norm.len() {
            w.write_record([
                trial.to_string(),
                layer.to_string(),
                fmt_f64(m.detail_norm[layer]),
                if layer == 0 { String::new() } else { fmt_f64(m.rel_update[layer - 1]) },
                m.cos_to_init[layer].map(fmt_f64).unwrap_or_default(),
                cross.map(|c| fmt_f64(c[layer])).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(n: usize) -> NoiseModel {
        NoiseModel::new(n, 0.0).unwrap()
    }

    #[test]
    fn plain_uniform_kills_detail() {
        let mut cfg = LayerStackConfig::new(StochasticMatrix::uniform(4), quiet(4), Mode::Plain);
        cfg.depth = 3;
        let x = FeatureVector::new(vec![1.0, -2.0, 0.5, 3.0]);
        let m = run_plain(&cfg, &x, &mut TrialRng::from_seed(0)).unwrap();
        assert!(m.detail_norm[0] > 0.0);
        assert!(m.detail_norm[1..].iter().all(|&d| d < 1e-15));
        assert!(m.cos_to_init[1].is_none());
    }

    #[test]
    fn plain_permutation_is_isometric() {
        let mut cfg = LayerStackConfig::new(StochasticMatrix::permutation(&[1, 2, 0]), quiet(3), Mode::Plain);
        cfg.depth = 6;
        let x = FeatureVector::new(vec![1.0, 0.0, -1.0]);
        let m = run_plain(&cfg, &x, &mut TrialRng::from_seed(0)).unwrap();
        assert!(m.detail_norm.iter().all(|d| (d - 2f64.sqrt()).abs() < 1e-15));
        assert!((m.cos_to_init[3].unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ln_pair_permutation_identical_inputs() {
        let mut cfg = LayerStackConfig::new(StochasticMatrix::permutation(&[2, 0, 3, 1]), quiet(4), Mode::Ln);
        cfg.depth = 5;
        let x = FeatureVector::new(vec![0.3, -1.0, 2.0, 0.1]);
        let mut r1 = TrialRng::from_seed(1);
        let mut r2 = TrialRng::from_seed(2);
        let p = run_ln_pair(&cfg, &x, &x, &mut r1, &mut r2).unwrap();
        assert!(p.cross_cos.iter().all(|c| (c - 1.0).abs() < 1e-14));
        for layer in 1..=5 {
            assert!((p.first.detail_norm[layer] - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_uniform_relu_stagnates_exactly() {
        let mut cfg = LayerStackConfig::new(StochasticMatrix::uniform(4), quiet(4), Mode::Residual);
        cfg.activation = Activation::Relu;
        cfg.depth = 10;
        let x = FeatureVector::new(vec![1.0, -1.0, 0.5, -0.5]);
        let m = run_residual(&cfg, &x, &mut TrialRng::from_seed(0)).unwrap();
        assert_eq!(m.last, x.values());
        assert_eq!(m.contract_violations, Some(0));
        assert_eq!(angular_drift(&m).unwrap(), 0.0);
    }

    #[test]
    fn residual_rejects_mean_component_when_projecting() {
        let cfg = LayerStackConfig::new(StochasticMatrix::uniform(3), quiet(3), Mode::Residual);
        let x = FeatureVector::new(vec![1.0, 1.0, 1.0]);
        assert!(run_residual(&cfg, &x, &mut TrialRng::from_seed(0)).is_err());
    }

    #[test]
    fn drift_of_negated_state_is_pi() {
        let mut m = TrajectoryMetrics::start(&[1.0, -1.0]);
        m.record(vec![-1.0, 1.0]);
        assert!((angular_drift(&m).unwrap() - std::f64::consts::PI).abs() < 1e-15);
        let flat = TrajectoryMetrics::start(&[2.0, 2.0]);
        assert!(matches!(angular_drift(&flat), Err(Error::DegenerateInput)));
    }

    #[test]
    fn mode_and_dimension_checks() {
        let cfg = LayerStackConfig::new(StochasticMatrix::uniform(3), quiet(3), Mode::Ln);
        let x = FeatureVector::new(vec![1.0, 0.0, -1.0]);
        assert!(run_plain(&cfg, &x, &mut TrialRng::from_seed(0)).is_err());
        let plain = LayerStackConfig::new(StochasticMatrix::uniform(3), quiet(3), Mode::Plain);
        let short = FeatureVector::new(vec![1.0, -1.0]);
        assert!(matches!(run_plain(&plain, &short, &mut TrialRng::from_seed(0)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn trajectory_csv_layout() {
        let mut m = TrajectoryMetrics::start(&[1.0, -1.0]);
        m.record(vec![0.5, -0.5]);
        let mut buf = Vec::new();
        write_trajectory_csv(&[(7, &m, None)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,layer,detail_norm,rel_update,cos_to_init,cross_cos");
        assert!(lines[1].starts_with("7,0,") && lines[1].ends_with(",,1.0000000000000000e0,"));
        assert_eq!(lines.len(), 3);
    }
}
