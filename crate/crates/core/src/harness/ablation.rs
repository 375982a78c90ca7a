use super::{par_map, select_temperature, Experiment, ExperimentConfig, ExperimentOutput, Regime};
use crate::dsm::fmt_f64;
use crate::error::Result;
use crate::geometry::{self, FeatureVector, Gain, NoiseModel};
use crate::linalg::{mean, norm2, project_detail};
use crate::rng::{derive_trial_stream, StreamRole};
use crate::spectral;
use crate::stats;

const COLUMNS: [&str; 12] = [
    "seed", "rep", "gain", "sigma2", "gamma", "plain_norm", "affine_norm", "norm_ratio", "mean_shift",
    "cos_plain", "cos_affine", "bitwise_equal",
];

struct GainRow {
    affine_norm: f64,
    ratio: f64,
    shift: f64,
    cos_affine: f64,
    bitwise: bool,
}

struct AblationTrial {
    sigma2: f64,
    gamma: f64,
    plain_norm: f64,
    cos_plain: f64,
    gains: Vec<GainRow>,
}

fn ablation_trial(cfg: &ExperimentConfig, seed: u32, rep: u32, t: f64) -> Result<AblationTrial> {
    let m = cfg.trial_matrix(seed, rep, t)?;
    let s2 = spectral::sigma2(&m)?;
    let model = NoiseModel::new(cfg.n, cfg.nu)?;
    let mut srng = derive_trial_stream(seed, rep, StreamRole::Signal);
    let x = FeatureVector::new(
        geometry::uniform_sphere_sample(cfg.n, &mut srng)?.iter().map(|v| v * cfg.signal_norm).collect(),
    );
    let gamma = geometry::snr(s2, &x, &model)?.gamma;
    let s = m.matrix().matvec(&x.detail())?;
    let xi = geometry::sample_noise(&model, &mut derive_trial_stream(seed, rep, StreamRole::NoiseA));
    let y = FeatureVector::new(s.iter().zip(xi.values()).map(|(a, b)| a + b).collect());
    let plain = geometry::layer_norm(&y)?;
    let plain_norm = plain.norm();
    let cos_plain = geometry::cosine(plain.values(), &s)?;
    let beta = vec![cfg.beta; cfg.n];
    let gains = cfg
        .gains
        .iter()
        .map(|&g| {
            let aff = geometry::layer_norm_affine(&y, &Gain::Scalar(g), &beta)?;
            let reproj = project_detail(aff.values());
            let affine_norm = norm2(&reproj);
            Ok(GainRow {
                affine_norm,
                ratio: affine_norm / plain_norm,
                shift: mean(aff.values()),
                cos_affine: geometry::cosine(&reproj, &s)?,
                bitwise: aff.values() == plain.values(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTrial { sigma2: s2, gamma, plain_norm, cos_plain, gains })
}

/// Plain against affine Layer Norm on the same low-SNR pre-activations.
/// Directions are compared after re-projecting the affine output onto the
/// detail subspace, which removes any shift `β`.
pub fn run_affine_ablation(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(Experiment::AffineAblation, cfg, COLUMNS.to_vec());
    let choice = select_temperature(cfg, Regime::Low)?;
    let t = choice.temperature;
    out.note("selected_temperature", t);
    out.note("pilot_gamma", fmt_f64(choice.pilot_gamma));
    let keys = cfg.trial_keys();
    let trials = par_map(&keys, |&(seed, rep)| ablation_trial(cfg, seed, rep, t))?;
    for (gi, &g) in cfg.gains.iter().enumerate() {
        for (tr, &(seed, rep)) in trials.iter().zip(&keys) {
            let r = &tr.gains[gi];
            out.rows.push(vec![
                seed.to_string(),
                rep.to_string(),
                fmt_f64(g),
                fmt_f64(tr.sigma2),
                fmt_f64(tr.gamma),
                fmt_f64(tr.plain_norm),
                fmt_f64(r.affine_norm),
                fmt_f64(r.ratio),
                fmt_f64(r.shift),
                fmt_f64(tr.cos_plain),
                fmt_f64(r.cos_affine),
                r.bitwise.to_string(),
            ]);
        }
        let worst = trials.iter().map(|tr| (tr.gains[gi].ratio - g.abs()).abs()).fold(0.0, f64::max);
        let plain: Vec<f64> = trials.iter().map(|tr| tr.cos_plain).collect();
        let affine: Vec<f64> = trials.iter().map(|tr| tr.gains[gi].cos_affine).collect();
        let ks = stats::ks_two_sample(&plain, &affine);
        let key = format!("gain_{g}");
        out.note(&format!("{key}_max_ratio_error"), fmt_f64(worst));
        out.note(&format!("{key}_ks_statistic"), fmt_f64(ks.statistic));
        out.note(&format!("{key}_ks_p"), fmt_f64(ks.p_value));
        out.check(worst <= 1e-10, || format!("gain {g}: norm ratio off by {worst:e}"));
        out.check(ks.p_value > 0.01, || format!("gain {g}: direction distributions differ (KS p = {})", ks.p_value));
        if g == 1.0 && cfg.beta == 0.0 {
            let all = trials.iter().all(|tr| tr.gains[gi].bitwise);
            out.note("unit_gain_bitwise_equal", all);
            out.check(all, || "unit gain output differs from plain Layer Norm".into());
        }
    }
    Ok(out)
}
