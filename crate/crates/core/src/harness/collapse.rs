use super::{par_map, Experiment, ExperimentConfig, ExperimentOutput, Regime};
use crate::dsm::{self, fmt_f64, SinkhornConfig};
use crate::dynamics::{self, LayerStackConfig, Mode};
use crate::error::{Error, Result};
use crate::geometry::{self, FeatureVector, NoiseModel};
use crate::rng::{derive_trial_seed, derive_trial_stream, StreamRole};
use crate::spectral;
use crate::stats;

pub const HIST_BINS: usize = 41;
pub const PILOT_DSMS: u32 = 16;
const COLUMNS: [&str; 10] =
    ["kind", "seed", "rep", "temperature", "sigma2", "gamma", "final_cosine", "bin_lo", "bin_hi", "count"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureChoice {
    pub temperature: f64,
    /// Extreme pilot `γ` on the side that matters for the regime: the max
    /// for low SNR, the min for high SNR.
    pub pilot_gamma: f64,
}

fn pilot_gammas(cfg: &ExperimentConfig, t: f64) -> Result<Vec<f64>> {
    let base = cfg.seeds[0];
    let model = NoiseModel::new(cfg.n, cfg.nu)?;
    let signal = FeatureVector::new({
        let mut v = vec![0.0; cfg.n];
        v[0] = cfg.signal_norm;
        v[1] = -cfg.signal_norm;
        v.iter().map(|x| x / 2f64.sqrt()).collect()
    });
    (0..PILOT_DSMS)
        .map(|i| {
            let m = match cfg.cost {
                super::CostMode::Random => dsm::sinkhorn_generate(&SinkhornConfig {
                    n: cfg.n,
                    temperature: t,
                    iterations: cfg.iterations,
                    seed: derive_trial_seed(base, i, StreamRole::Pilot),
                })?,
                super::CostMode::Constant => cfg.trial_matrix(base, i, t)?,
            };
            Ok(geometry::snr(spectral::sigma2(&m)?, &signal, &model)?.gamma)
        })
        .collect()
}

/// Pilot measurement of `γ` per grid temperature. Low SNR takes the largest
/// `T` whose pilot `γ` stays below `gamma_target`; high SNR the smallest `T`
/// whose pilot `γ` reaches `high_gamma`.
pub fn select_temperature(cfg: &ExperimentConfig, regime: Regime) -> Result<TemperatureChoice> {
    let mut grid = cfg.temperatures.clone();
    grid.sort_by(f64::total_cmp);
    if regime == Regime::Low {
        grid.reverse();
    }
    for &t in &grid {
        let g = pilot_gammas(cfg, t)?;
        let choice = match regime {
            Regime::Low => {
                let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (max < cfg.gamma_target).then_some(TemperatureChoice { temperature: t, pilot_gamma: max })
            }
            Regime::High => {
                let min = g.iter().copied().fold(f64::INFINITY, f64::min);
                (min >= cfg.high_gamma).then_some(TemperatureChoice { temperature: t, pilot_gamma: min })
            }
        };
        if let Some(c) = choice {
            return Ok(c);
        }
    }
    Err(Error::SnrTargetUnreachable(match regime {
        Regime::Low => format!("no grid temperature gives gamma < {}", cfg.gamma_target),
        Regime::High => format!("no grid temperature gives gamma >= {}", cfg.high_gamma),
    }))
}

pub(super) struct CollapseTrial {
    pub sigma2: f64,
    pub gamma: f64,
    pub final_cosine: f64,
}

pub(super) fn collapse_trial(cfg: &ExperimentConfig, seed: u32, rep: u32, t: f64, mode: Mode) -> Result<CollapseTrial> {
    let m = cfg.trial_matrix(seed, rep, t)?;
    let s2 = spectral::sigma2(&m)?;
    let model = NoiseModel::new(cfg.n, cfg.nu)?;
    let mut srng = derive_trial_stream(seed, rep, StreamRole::Signal);
    let x: Vec<f64> = geometry::uniform_sphere_sample(cfg.n, &mut srng)?.iter().map(|v| v * cfg.signal_norm).collect();
    let xp = geometry::correlated_partner(&x, cfg.initial_cosine, &mut srng)?;
    let (x, xp) = (FeatureVector::new(x), FeatureVector::new(xp));
    let gamma = geometry::snr(s2, &x, &model)?.gamma.max(geometry::snr(s2, &xp, &model)?.gamma);
    let mut stack = LayerStackConfig::new(m, model, mode);
    stack.depth = cfg.collapse_depth;
    let pair = dynamics::run_ln_pair(
        &stack,
        &x,
        &xp,
        &mut derive_trial_stream(seed, rep, StreamRole::NoiseA),
        &mut derive_trial_stream(seed, rep, StreamRole::NoiseB),
    )?;
    Ok(CollapseTrial { sigma2: s2, gamma, final_cosine: pair.final_cosine() })
}

/// Final cross-cosines of highly similar input pairs after Layer-Norm
/// mixing, with a 41-bin histogram over `[-1, 1]`.
pub fn run_collapse_hist(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(Experiment::CollapseHist, cfg, COLUMNS.to_vec());
    let choice = select_temperature(cfg, cfg.regime)?;
    let t = choice.temperature;
    out.note("selected_temperature", t);
    out.note("pilot_gamma", fmt_f64(choice.pilot_gamma));

    let keys = cfg.trial_keys();
    let trials = par_map(&keys, |&(seed, rep)| collapse_trial(cfg, seed, rep, t, Mode::Ln))?;
    for (tr, &(seed, rep)) in trials.iter().zip(&keys) {
        out.rows.push(vec![
            "trial".into(),
            seed.to_string(),
            rep.to_string(),
            fmt_f64(t),
            fmt_f64(tr.sigma2),
            fmt_f64(tr.gamma),
            fmt_f64(tr.final_cosine),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    let cos: Vec<f64> = trials.iter().map(|t| t.final_cosine).collect();
    let width = 2.0 / HIST_BINS as f64;
    for (i, c) in stats::histogram(&cos, -1.0, 1.0, HIST_BINS).into_iter().enumerate() {
        let mut row = vec!["bin".to_string()];
        row.extend(std::iter::repeat(String::new()).take(6));
        row.extend([fmt_f64(-1.0 + i as f64 * width), fmt_f64(-1.0 + (i + 1) as f64 * width), c.to_string()]);
        out.rows.push(row);
    }

    let mean = stats::mean(&cos);
    let sd = stats::std_dev(&cos);
    let se = sd / (cos.len() as f64).sqrt();
    let zero_mean = mean.abs() <= 3.0 * se;
    let jb = stats::jarque_bera(&cos);
    let max_gamma = trials.iter().map(|t| t.gamma).fold(f64::NEG_INFINITY, f64::max);
    let min_gamma = trials.iter().map(|t| t.gamma).fold(f64::INFINITY, f64::min);
    let variance = stats::variance(&cos);
    let sphere_variance = 1.0 / (cfg.n as f64 - 1.0);
    out.note("trials", cos.len());
    out.note("mean_cosine", fmt_f64(mean));
    out.note("std_cosine", fmt_f64(sd));
    out.note("standard_error", fmt_f64(se));
    out.note("zero_mean_pass", zero_mean);
    out.note("jarque_bera", fmt_f64(jb.statistic));
    out.note("jarque_bera_p", fmt_f64(jb.p_value));
    out.note("variance", fmt_f64(variance));
    out.note("sphere_variance", fmt_f64(sphere_variance));
    out.note("min_gamma", fmt_f64(min_gamma));
    out.note("max_gamma", fmt_f64(max_gamma));

    match cfg.regime {
        Regime::Low => {
            out.check(max_gamma < cfg.gamma_target, || format!("measured gamma {max_gamma} not below {}", cfg.gamma_target));
            out.check(zero_mean, || format!("mean cosine {mean} outside 3 standard errors ({se}) of zero"));
            out.check(jb.p_value > 0.01, || format!("Jarque-Bera rejects normality (p = {})", jb.p_value));
            if max_gamma == 0.0 {
                let rel = (variance - sphere_variance).abs() / sphere_variance;
                out.check(rel <= 0.1, || format!("variance {variance} is not within 10% of 1/(n-1)"));
            }
        }
        Regime::High => {
            out.check(min_gamma >= cfg.high_gamma, || format!("measured gamma {min_gamma} below {}", cfg.high_gamma));
            out.check(mean >= 0.5, || format!("high-SNR mean cosine {mean} is below 0.5"));
            out.check(!zero_mean, || "high-SNR cosines pass the zero-mean test".into());
        }
    }
    Ok(out)
}
