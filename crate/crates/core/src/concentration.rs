//! Closed-form tail bounds and their Monte Carlo verifiers.
//!
//! Each verifier counts how often an event occurs and compares the
//! frequency with the theoretical probability. Sampling noise is absorbed
//! by a one-sided Clopper–Pearson interval at 99.9% confidence: a check is
//! *violated* only when the lower confidence bound on the true frequency
//! lies above the theoretical value.

use statrs::function::beta::beta_reg;

use crate::dsm::{fmt_f64, StochasticMatrix};
use crate::error::{Error, Result};
use crate::geometry::{self, FeatureVector, NoiseModel, LOW_SNR_GAMMA};
use crate::linalg::{self, dot, norm2, project_detail, svd, DenseMatrix};
use crate::rng::TrialRng;
use crate::spectral;
use crate::stats::{self, clopper_pearson};

pub const CONFIDENCE: f64 = 0.999;
pub const MIN_TRIALS: usize = 1000;
/// Constants of the failure probability `C exp(-c n ε²)`.
pub const THEOREM1_C: f64 = 2.0;
pub const THEOREM1_C_UNION: f64 = 4.0;
pub const THEOREM1_RATE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheckResult {
    pub check_name: String,
    pub n: usize,
    pub params: String,
    pub theoretical_bound: f64,
    pub empirical_frequency: f64,
    pub exceedances: u64,
    pub trials: u64,
    /// Distance from the empirical frequency to its upper confidence bound.
    pub slack: f64,
    /// Lower confidence bound on the true frequency.
    pub lower_confidence: f64,
    pub violated: bool,
}

impl BoundCheckResult {
    pub const CSV_HEADER: [&'static str; 8] =
        ["check_name", "n", "params", "trials", "theoretical", "empirical", "slack", "violated"];

    pub fn from_counts(check_name: &str, n: usize, params: String, theoretical: f64, exceedances: u64, trials: u64) -> Self {
        let cp = clopper_pearson(exceedances, trials, CONFIDENCE);
        let empirical = exceedances as f64 / trials as f64;
        BoundCheckResult {
            check_name: check_name.to_string(),
            n,
            params,
            theoretical_bound: theoretical,
            empirical_frequency: empirical,
            exceedances,
            trials,
            slack: cp.upper - empirical,
            lower_confidence: cp.lower,
            violated: cp.lower > theoretical,
        }
    }

    /// Re-evaluates the verdict against `factor * theoretical`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let theoretical = self.theoretical_bound * factor;
        BoundCheckResult {
            theoretical_bound: theoretical,
            violated: self.lower_confidence > theoretical,
            ..self.clone()
        }
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.check_name.clone(),
            self.n.to_string(),
            self.params.clone(),
            self.trials.to_string(),
            fmt_f64(self.theoretical_bound),
            fmt_f64(self.empirical_frequency),
            fmt_f64(self.slack),
            self.violated.to_string(),
        ]
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!("verifiers need at least {MIN_TRIALS} trials, got {trials}")));
    }
    Ok(())
}

/// `Pr(|‖g_k‖ - √k| >= t) <= 2 exp(-t²/2)`, clamped to 1.
pub fn laurent_massart_tail(k: usize, t: f64) -> f64 {
    assert!(k >= 1, "chi dimension must be positive");
    (2.0 * (-t * t / 2.0).exp()).min(1.0)
}

/// Frequency of `|‖P⊥ξ‖ - ν√((n-1)/n)| >= νt/√n` against `2 exp(-t²/2)`.
pub fn verify_projected_norm_concentration(
    model: &NoiseModel,
    t: f64,
    trials: usize,
    rng: &mut TrialRng,
) -> Result<BoundCheckResult> {
    check_trials(trials)?;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let n = model.n();
    let center = model.expected_detail_norm();
    let threshold = model.nu() * t / (n as f64).sqrt();
    let mut hits = 0u64;
    for _ in 0..trials {
        let xi = geometry::sample_noise(model, rng);
        let dev = (xi.detail_norm() - center).abs();
        if dev > 0.0 && dev >= threshold {
            hits += 1;
        }
    }
    Ok(BoundCheckResult::from_counts(
        "projected_norm_concentration",
        n,
        format!("nu={} t={}", model.nu(), t),
        laurent_massart_tail(n - 1, t),
        hits,
        trials as u64,
    ))
}

/// Levy-type tail `2 exp(-(n-2) ε²/2)` for inner products of independent
/// uniform directions in the detail subspace, clamped to 1.
pub fn levy_tail(n: usize, eps: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidDimension { n, reason: "levy tail needs n >= 3" });
    }
    Ok((2.0 * (-((n - 2) as f64) * eps * eps / 2.0).exp()).min(1.0))
}

/// Exact `Pr(|⟨u, v⟩| >= ε)` for independent uniform unit vectors on the
/// sphere of the `(n-1)`-dimensional detail subspace: `(1 + ⟨u,v⟩)/2` is
/// `Beta((n-2)/2, (n-2)/2)`.
pub fn exact_sphere_tail(n: usize, eps: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidDimension { n, reason: "sphere marginal needs n >= 3" });
    }
    if eps <= 0.0 {
        return Ok(1.0);
    }
    if eps > 1.0 {
        return Ok(0.0);
    }
    let a = (n as f64 - 2.0) / 2.0;
    Ok((2.0 * (1.0 - beta_reg(a, a, (1.0 + eps) / 2.0))).clamp(0.0, 1.0))
}

/// Exact CDF of `⟨u, v⟩` on `[-1, 1]` for the same sphere.
pub fn sphere_inner_product_cdf(n: usize, t: f64) -> f64 {
    let a = (n as f64 - 2.0) / 2.0;
    beta_reg(a, a, ((1.0 + t) / 2.0).clamp(0.0, 1.0))
}

fn sphere_pair_inner_products(n: usize, trials: usize, rng: &mut TrialRng) -> Result<Vec<f64>> {
    (0..trials)
        .map(|_| {
            let u = geometry::uniform_sphere_sample(n, rng)?;
            let v = geometry::uniform_sphere_sample(n, rng)?;
            Ok(dot(&u, &v))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevyCheck {
    pub bound: BoundCheckResult,
    /// Same counts judged against the exact sphere tail.
    pub exact: BoundCheckResult,
    pub inner_products: Vec<f64>,
}

/// Draws independent pairs on the detail sphere and counts `|⟨u,v⟩| >= ε`.
pub fn verify_levy(n: usize, eps: f64, trials: usize, rng: &mut TrialRng) -> Result<LevyCheck> {
    check_trials(trials)?;
    let tail = levy_tail(n, eps)?;
    let ips = sphere_pair_inner_products(n, trials, rng)?;
    let hits = ips.iter().filter(|c| c.abs() >= eps).count() as u64;
    let params = format!("eps={eps}");
    Ok(LevyCheck {
        bound: BoundCheckResult::from_counts("levy_tail", n, params.clone(), tail, hits, trials as u64),
        exact: BoundCheckResult::from_counts("levy_exact_marginal", n, params, exact_sphere_tail(n, eps)?, hits, trials as u64),
        inner_products: ips,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem1Bound {
    /// `ε + 8γ`
    pub bound: f64,
    /// The bound exceeds 1 and says nothing about cosines.
    pub vacuous: bool,
}

pub fn theorem1_bound(gamma: f64, eps: f64) -> Result<Theorem1Bound> {
    if gamma > LOW_SNR_GAMMA {
        return Err(Error::HighSnr(gamma));
    }
    if !(eps > 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("need eps > 0 and gamma >= 0, got eps={eps} gamma={gamma}")));
    }
    let bound = eps + 8.0 * gamma;
    Ok(Theorem1Bound { bound, vacuous: bound > 1.0 })
}

/// `δ + C exp(-c n ε²)`, clamped to 1; the theorem holds with probability
/// at least one minus this.
pub fn theorem1_failure_probability(n: usize, eps: f64, delta: f64, c_const: f64) -> f64 {
    (delta + c_const * (-THEOREM1_RATE * n as f64 * eps * eps).exp()).min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Check {
    pub result: BoundCheckResult,
    pub gamma: f64,
    pub threshold: f64,
    /// Frequency of trials where either noise norm left `[ν/2, 3ν/2]`.
    pub conditioning_failure: f64,
    pub failure_c2: f64,
    pub failure_c4: f64,
    pub mean_abs_cosine: f64,
    pub cosines: Vec<f64>,
}

/// Monte Carlo check of `|⟨u, v⟩| <= ε + 8γ` for normalized outputs of two
/// inputs mixed by `m` under independent noise.
///
/// The failure budget is `δ + 2 exp(-nε²/2)` where `δ` is the measured
/// frequency of the noise-norm conditioning event failing on either side.
/// The union-bound variant with `C = 4` is reported alongside.
pub fn verify_theorem1(
    m: &StochasticMatrix,
    x: &FeatureVector,
    x_prime: &FeatureVector,
    model: &NoiseModel,
    eps: f64,
    trials: usize,
    rng: &mut TrialRng,
) -> Result<Theorem1Check> {
    check_trials(trials)?;
    let n = model.n();
    if m.n() != n || x.len() != n || x_prime.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.n().max(x.len()).max(x_prime.len()) });
    }
    let s2 = spectral::sigma2(m)?;
    let gamma = geometry::snr(s2, x, model)?.gamma.max(geometry::snr(s2, x_prime, model)?.gamma);
    let bound = theorem1_bound(gamma, eps)?;
    let s = m.matrix().matvec(&x.detail())?;
    let s_prime = m.matrix().matvec(&x_prime.detail())?;
    let (lo, hi) = (model.nu() / 2.0, 1.5 * model.nu());

    let mut hits = 0u64;
    let mut cond_fail = 0u64;
    let mut cosines = Vec::with_capacity(trials);
    for _ in 0..trials {
        let xi = geometry::sample_noise(model, rng);
        let xi_prime = geometry::sample_noise(model, rng);
        if !(lo..=hi).contains(&xi.detail_norm()) || !(lo..=hi).contains(&xi_prime.detail_norm()) {
            cond_fail += 1;
        }
        let u = unit_detail(&s, xi.values())?;
        let v = unit_detail(&s_prime, xi_prime.values())?;
        let c = dot(&u, &v).clamp(-1.0, 1.0);
        if c.abs() > bound.bound {
            hits += 1;
        }
        cosines.push(c);
    }
    let delta = cond_fail as f64 / trials as f64;
    let failure_c2 = theorem1_failure_probability(n, eps, delta, THEOREM1_C);
    let failure_c4 = theorem1_failure_probability(n, eps, delta, THEOREM1_C_UNION);
    let result = BoundCheckResult::from_counts(
        "theorem1_collapse",
        n,
        format!("gamma={gamma:.6e} eps={eps} nu={}", model.nu()),
        failure_c2,
        hits,
        trials as u64,
    );
    let mean_abs_cosine = cosines.iter().map(|c| c.abs()).sum::<f64>() / trials as f64;
    Ok(Theorem1Check {
        result,
        gamma,
        threshold: bound.bound,
        conditioning_failure: delta,
        failure_c2,
        failure_c4,
        mean_abs_cosine,
        cosines,
    })
}

fn unit_detail(signal: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    let y: Vec<f64> = signal.iter().zip(noise).map(|(a, b)| a + b).collect();
    let p = project_detail(&y);
    let nrm = norm2(&p);
    if nrm == 0.0 {
        return Err(Error::DegenerateInput);
    }
    Ok(p.into_iter().map(|v| v / nrm).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WedinResult {
    /// `‖sin Θ‖₂` between the leading-r left singular subspaces of A and A+E.
    pub sin_theta: f64,
    /// `‖E‖₂ / (σ_r(A) - σ_{r+1}(A))`
    pub bound: f64,
    pub gap: f64,
}

impl WedinResult {
    /// The inequality is asserted only where the bound is informative.
    pub fn holds(&self) -> bool {
        self.bound >= 1.0 || self.sin_theta <= self.bound
    }
}

pub fn wedin_sin_theta(a: &DenseMatrix, e: &DenseMatrix, r: usize) -> Result<WedinResult> {
    let b = a.add(e)?;
    let rank = a.rows().min(a.cols());
    if r == 0 || r > rank {
        return Err(Error::InvalidParameter(format!("subspace dimension r={r} must lie in 1..={rank}")));
    }
    let sa = svd(a, true)?;
    let gap = sa.sigma(r - 1) - sa.sigma(r);
    if gap <= 1e-10 * sa.sigma(0) {
        return Err(Error::ZeroGap { gap, sigma1: sa.sigma(0) });
    }
    let sb = svd(&b, true)?;
    let ua = leading_columns(sa.left_vectors.as_ref().expect("vectors requested"), r);
    let ub = leading_columns(sb.left_vectors.as_ref().expect("vectors requested"), r);
    // (I - U_B U_Bᵀ) U_A
    let residual = ua.sub(&ub.matmul(&ub.transpose().matmul(&ua)?)?)?;
    let sin_theta = linalg::spectral_norm(&residual)?.clamp(0.0, 1.0);
    Ok(WedinResult { sin_theta, bound: linalg::spectral_norm(e)? / gap, gap })
}

fn leading_columns(m: &DenseMatrix, r: usize) -> DenseMatrix {
    let data = (0..m.rows()).flat_map(|i| m.row(i)[..r].to_vec()).collect();
    DenseMatrix::from_row_major(m.rows(), r, data).expect("finite columns")
}

/// Random Wedin pairs: Gaussian `A` of size `dim`, random `r`, Gaussian
/// direction for `E` scaled to `‖E‖₂ = u · ratio · Δ` with `u ~ U(0,1]`.
pub fn verify_wedin_random(dim: usize, ratio: f64, trials: usize, rng: &mut TrialRng) -> Result<(BoundCheckResult, f64)> {
    if dim < 2 {
        return Err(Error::InvalidDimension { n: dim, reason: "wedin sweep needs dim >= 2" });
    }
    let mut violations = 0u64;
    let mut worst_ratio: f64 = 0.0;
    let mut done = 0u64;
    while done < trials as u64 {
        let a = DenseMatrix::from_row_major(dim, dim, rng.gaussian_vec(dim * dim, 1.0))?;
        let r = 1 + rng.below(dim - 1);
        let sa = svd(&a, false)?;
        let gap = sa.sigma(r - 1) - sa.sigma(r);
        if gap <= 1e-10 * sa.sigma(0) {
            continue;
        }
        let dir = DenseMatrix::from_row_major(dim, dim, rng.gaussian_vec(dim * dim, 1.0))?;
        let scale = (1.0 - rng.uniform()) * ratio * gap / linalg::spectral_norm(&dir)?;
        let e = dir.scale(scale);
        let w = wedin_sin_theta(&a, &e, r)?;
        if !w.holds() {
            violations += 1;
        }
        if w.bound > 0.0 {
            worst_ratio = worst_ratio.max(w.sin_theta / w.bound);
        }
        done += 1;
    }
    let result = BoundCheckResult::from_counts(
        "wedin_random",
        dim,
        format!("ratio={ratio}"),
        0.0,
        violations,
        trials as u64,
    );
    Ok((result, worst_ratio))
}

/// Counts Perron failures `|σ₁ - 1| > 1e-7` over a batch of matrices.
pub fn perron_batch<'a>(matrices: impl IntoIterator<Item = &'a StochasticMatrix>) -> Result<(u64, u64, f64)> {
    let mut failures = 0;
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for m in matrices {
        let c = spectral::perron_check(m.matrix())?;
        if !c.passed {
            failures += 1;
        }
        worst = worst.max((c.sigma1 - 1.0).abs());
        total += 1;
    }
    Ok((failures, total, worst))
}

/// Sample mean of `xs` is within `k` standard errors of zero.
pub fn zero_mean_within(xs: &[f64], k: f64) -> bool {
    let m = stats::mean(xs);
    m.abs() <= k * stats::std_dev(xs) / (xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laurent_massart_values() {
        assert_eq!(laurent_massart_tail(10, 1e-9), 1.0);
        assert!((laurent_massart_tail(63, 3.0) - 2.0 * (-4.5f64).exp()).abs() < 1e-15);
        assert!((laurent_massart_tail(63, 3.0) - 0.022_218).abs() < 1e-5);
        // t = √(2cn) ε with c = 1/2 reproduces 2 exp(-n ε²/2).
        let (n, eps) = (64usize, 0.3);
        let t = (2.0 * 0.5 * n as f64).sqrt() * eps;
        let expected = 2.0 * (-(n as f64) * eps * eps / 2.0).exp();
        assert!((laurent_massart_tail(n - 1, t) - expected).abs() < 1e-15);
        assert!((theorem1_failure_probability(n, eps, 0.0, THEOREM1_C) - expected).abs() < 1e-15);
    }

    #[test]
    fn levy_values() {
        assert!((levy_tail(64, 0.5).unwrap() - 2.0 * (-7.75f64).exp()).abs() < 1e-15);
        assert!((levy_tail(64, 0.5).unwrap() - 8.6148e-4).abs() < 1e-7);
        assert_eq!(levy_tail(64, 1e-9).unwrap(), 1.0);
        assert!(levy_tail(66, 0.3).unwrap() < levy_tail(64, 0.3).unwrap());
        assert!(matches!(levy_tail(2, 0.3), Err(Error::InvalidDimension { .. })));
    }

    #[test]
    fn exact_sphere_tail_on_the_circle() {
        // n = 3: the detail sphere is a circle, ⟨u,v⟩ = cos θ with θ uniform.
        for eps in [0.1, 0.5, 0.9] {
            let expected = 1.0 - 2.0 / std::f64::consts::PI * f64::asin(eps);
            assert!((exact_sphere_tail(3, eps).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn theorem1_bound_values() {
        assert_eq!(theorem1_bound(0.0, 0.3).unwrap().bound, 0.3);
        let edge = theorem1_bound(0.125, 0.1).unwrap();
        assert!((edge.bound - 1.1).abs() < 1e-15 && edge.vacuous);
        let mid = theorem1_bound(0.05, 0.3).unwrap();
        assert!((mid.bound - 0.7).abs() < 1e-15 && !mid.vacuous);
        assert!(matches!(theorem1_bound(0.2, 0.1), Err(Error::HighSnr(_))));
    }

    #[test]
    fn verifiers_require_enough_trials() {
        let model = NoiseModel::new(8, 0.1).unwrap();
        let mut rng = TrialRng::from_seed(0);
        assert!(verify_projected_norm_concentration(&model, 1.0, 10, &mut rng).is_err());
    }

    #[test]
    fn projected_norm_degenerate_and_far_tails() {
        let mut rng = TrialRng::from_seed(4);
        let quiet = NoiseModel::new(64, 0.0).unwrap();
        let r = verify_projected_norm_concentration(&quiet, 1.0, 1000, &mut rng).unwrap();
        assert_eq!(r.exceedances, 0);
        let model = NoiseModel::new(64, 0.1).unwrap();
        let far = verify_projected_norm_concentration(&model, 50.0, 1000, &mut rng).unwrap();
        assert_eq!(far.empirical_frequency, 0.0);
        assert!(!far.violated);
    }

    #[test]
    fn levy_beyond_one_never_fires() {
        let mut rng = TrialRng::from_seed(6);
        let c = verify_levy(64, 1.0 + 1e-9, 1000, &mut rng).unwrap();
        assert_eq!(c.bound.exceedances, 0);
    }

    #[test]
    fn wedin_examples() {
        let a = DenseMatrix::diagonal(&[2.0, 1.0]);
        let zero = wedin_sin_theta(&a, &DenseMatrix::zeros(2, 2), 1).unwrap();
        assert!(zero.sin_theta < 1e-15);
        let aligned = wedin_sin_theta(&a, &DenseMatrix::diagonal(&[0.0, 0.5]), 1).unwrap();
        assert!(aligned.sin_theta < 1e-15);
        assert!((aligned.bound - 0.5).abs() < 1e-15);
        let flat = DenseMatrix::identity(3);
        assert!(matches!(wedin_sin_theta(&flat, &DenseMatrix::zeros(3, 3), 1), Err(Error::ZeroGap { .. })));
    }

    #[test]
    fn check_verdict_uses_lower_confidence_bound() {
        let r = BoundCheckResult::from_counts("x", 4, String::new(), 0.01, 15, 1000);
        assert!(!r.violated, "{r:?}");
        let r = BoundCheckResult::from_counts("x", 4, String::new(), 0.01, 40, 1000);
        assert!(r.violated);
        let zero = BoundCheckResult::from_counts("x", 4, String::new(), 0.0, 0, 1000);
        assert!(!zero.violated);
        let one = BoundCheckResult::from_counts("x", 4, String::new(), 0.0, 1, 1000);
        assert!(one.violated);
    }
}
