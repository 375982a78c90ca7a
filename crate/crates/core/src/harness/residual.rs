use super::{par_map, Experiment, ExperimentConfig, ExperimentOutput};
use crate::dsm::{fmt_f64, StochasticMatrix};
use crate::dynamics::{self, Activation, LayerStackConfig, Mode};
use crate::error::Result;
use crate::geometry::{self, FeatureVector, NoiseModel};
use crate::linalg::norm2;
use crate::rng::{derive_trial_stream, StreamRole};
use crate::spectral;

const EARLY_LAYERS: usize = 5;
const COLUMNS: [&str; 10] = [
    "regime", "seed", "rep", "sigma2", "contract_violations", "max_update_excess", "drift", "displacement",
    "min_early_rel_update", "final_rel_update",
];

/// A Sinkhorn DSM pulled toward `U` until `σ₂` equals `cfg.trap_sigma2`.
pub fn trap_matrix(cfg: &ExperimentConfig, seed: u32, rep: u32) -> Result<StochasticMatrix> {
    let m = cfg.trial_matrix(seed, rep, cfg.temperature)?;
    let s2 = spectral::sigma2(&m)?;
    if s2 <= cfg.trap_sigma2 {
        return Ok(m);
    }
    m.blend_with_uniform(cfg.trap_sigma2 / s2)
}

/// `control_sigma2 · P + (1 - control_sigma2) · U` for a random permutation.
pub fn control_matrix(cfg: &ExperimentConfig, seed: u32, rep: u32) -> Result<StochasticMatrix> {
    let perm = derive_trial_stream(seed, rep, StreamRole::Permutation).permutation(cfg.n);
    StochasticMatrix::permutation(&perm).blend_with_uniform(cfg.control_sigma2)
}

struct ResidualRun {
    sigma2: f64,
    violations: usize,
    max_excess: f64,
    drift: f64,
    displacement: f64,
    min_early: f64,
    final_rel: f64,
}

fn residual_run(cfg: &ExperimentConfig, m: StochasticMatrix, seed: u32, rep: u32) -> Result<ResidualRun> {
    let sigma2 = spectral::sigma2(&m)?;
    let mut stack = LayerStackConfig::new(m, NoiseModel::new(cfg.n, 0.0)?, Mode::Residual);
    stack.activation = Activation::Relu;
    stack.depth = cfg.depth;
    let mut srng = derive_trial_stream(seed, rep, StreamRole::Signal);
    let x0 = FeatureVector::new(geometry::uniform_sphere_sample(cfg.n, &mut srng)?);
    let metrics = dynamics::run_residual(&stack, &x0, &mut srng)?;
    let max_excess = metrics
        .update_norm
        .iter()
        .zip(&metrics.update_bound)
        .map(|(u, b)| u - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let step: Vec<f64> = metrics.last.iter().zip(&metrics.initial).map(|(a, b)| a - b).collect();
    Ok(ResidualRun {
        sigma2,
        violations: metrics.contract_violations.unwrap_or(0),
        max_excess,
        drift: dynamics::angular_drift(&metrics)?,
        displacement: norm2(&step),
        min_early: metrics.rel_update.iter().take(EARLY_LAYERS).copied().fold(f64::INFINITY, f64::min),
        final_rel: *metrics.rel_update.last().expect("depth >= 1"),
    })
}

/// Residual stacks `x ↦ P⊥(x + relu(M x))` at depth `L` from unit detail
/// inputs, in the low-`σ₂` trap and in a high-`σ₂` control.
pub fn run_residual_depth(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(Experiment::ResidualDepth, cfg, COLUMNS.to_vec());
    let keys = cfg.trial_keys();
    let trap = par_map(&keys, |&(s, r)| residual_run(cfg, trap_matrix(cfg, s, r)?, s, r))?;
    let control = par_map(&keys, |&(s, r)| residual_run(cfg, control_matrix(cfg, s, r)?, s, r))?;
    for (name, runs) in [("trap", &trap), ("control", &control)] {
        for (run, &(seed, rep)) in runs.iter().zip(&keys) {
            out.rows.push(vec![
                name.into(),
                seed.to_string(),
                rep.to_string(),
                fmt_f64(run.sigma2),
                run.violations.to_string(),
                fmt_f64(run.max_excess),
                fmt_f64(run.drift),
                fmt_f64(run.displacement),
                fmt_f64(run.min_early),
                fmt_f64(run.final_rel),
            ]);
        }
    }
    let violations: usize = trap.iter().chain(&control).map(|r| r.violations).sum();
    let trap_max = trap.iter().map(|r| r.drift).fold(0.0, f64::max);
    let trap_mean = trap.iter().map(|r| r.drift).sum::<f64>() / trap.len() as f64;
    let control_min = control.iter().map(|r| r.drift).fold(f64::INFINITY, f64::min);
    let control_early = control.iter().map(|r| r.min_early).fold(f64::INFINITY, f64::min);
    out.note("contract_violations", violations);
    out.note("trap_max_drift", fmt_f64(trap_max));
    out.note("trap_mean_drift", fmt_f64(trap_mean));
    out.note("control_min_drift", fmt_f64(control_min));
    out.note("control_min_early_rel_update", fmt_f64(control_early));
    let th = cfg.drift_threshold;
    out.check(violations == 0, || format!("{violations} layers break the residual update bound"));
    out.check(trap_max <= th, || format!("trap drift reaches {trap_max} rad, above {th}"));
    out.check(control_min > th, || format!("control drift falls to {control_min} rad, not above {th}"));
    out.check(control_early > 0.1, || format!("control relative update drops to {control_early} in the first layers"));
    Ok(out)
}
