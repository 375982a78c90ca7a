use super::{opt, par_map, CostMode, Experiment, ExperimentConfig, ExperimentOutput};
use crate::dsm::{self, fmt_f64, EXPERIMENT_TOL};
use crate::error::Result;
use crate::spectral::{self, SpectralReport};
use crate::stats;

const COLUMNS: [&str; 16] = [
    "kind", "temperature", "seed", "rep", "sigma1", "sigma2", "entropy", "d_eff", "deviation",
    "transient_max", "transient_argmax", "count", "mean_sigma2", "std_sigma2", "mean_entropy", "std_entropy",
];

/// `σ₂` and entropy of fresh Sinkhorn DSMs over the temperature grid, one
/// per `(T, seed, rep)`, followed by one aggregate row per temperature.
///
/// A trial reuses the same cost matrix at every temperature.
pub fn run_sweep_temp(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(Experiment::SweepTemp, cfg, COLUMNS.to_vec());
    let keys = cfg.trial_keys();
    let mut means = Vec::new();
    let (mut all_h, mut all_s2) = (Vec::new(), Vec::new());
    let mut worst_dev: f64 = 0.0;
    for &t in &cfg.temperatures {
        let reports: Vec<(SpectralReport, f64)> = par_map(&keys, |&(seed, rep)| {
            let m = cfg.trial_matrix(seed, rep, t)?;
            let dev = dsm::stochastic_deviation(m.matrix());
            Ok((spectral::spectral_report(&m, u64::from(seed), t, cfg.eps, cfg.transient_depth)?, dev))
        })?;
        let s2: Vec<f64> = reports.iter().map(|(r, _)| r.sigma2).collect();
        let h: Vec<f64> = reports.iter().map(|(r, _)| r.entropy).collect();
        for ((r, dev), &(seed, rep)) in reports.iter().zip(&keys) {
            worst_dev = worst_dev.max(*dev);
            let transient = cfg.transient_depth > 0;
            out.rows.push(vec![
                "trial".into(),
                fmt_f64(t),
                seed.to_string(),
                rep.to_string(),
                fmt_f64(r.sigma1),
                fmt_f64(r.sigma2),
                fmt_f64(r.entropy),
                fmt_f64(r.effective_depth),
                fmt_f64(*dev),
                opt(transient.then_some(r.transient_max)),
                if transient { r.transient_argmax.to_string() } else { String::new() },
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ]);
        }
        let (ms, ss, mh, sh) = (stats::mean(&s2), stats::std_dev(&s2), stats::mean(&h), stats::std_dev(&h));
        let mut agg = vec!["aggregate".to_string(), fmt_f64(t)];
        agg.extend(std::iter::repeat(String::new()).take(9));
        agg.extend([s2.len().to_string(), fmt_f64(ms), fmt_f64(ss), fmt_f64(mh), fmt_f64(sh)]);
        out.rows.push(agg);
        means.push((t, ms, mh));
        all_h.extend(h);
        all_s2.extend(s2);
    }
    out.note("max_deviation", fmt_f64(worst_dev));
    out.check(worst_dev <= EXPERIMENT_TOL, || format!("stochastic deviation {worst_dev:e} exceeds {EXPERIMENT_TOL:e}"));

    if cfg.cost == CostMode::Random && cfg.temperatures.len() >= 2 {
        let mut by_t = means.clone();
        by_t.sort_by(|a, b| a.0.total_cmp(&b.0));
        let decreasing = by_t.windows(2).all(|w| w[1].1 < w[0].1);
        let rho = stats::spearman(&all_h, &all_s2);
        let agg_rho = stats::spearman(
            &by_t.iter().map(|m| m.2).collect::<Vec<_>>(),
            &by_t.iter().map(|m| m.1).collect::<Vec<_>>(),
        );
        out.note("mean_sigma2_strictly_decreasing", decreasing);
        out.note("spearman_entropy_sigma2", fmt_f64(rho));
        out.note("spearman_entropy_sigma2_means", fmt_f64(agg_rho));
        out.check(decreasing, || "mean sigma2 is not strictly decreasing in temperature".into());
        out.check(rho <= -0.95, || format!("spearman(entropy, sigma2) = {rho} is above -0.95"));
    }
    Ok(out)
}
