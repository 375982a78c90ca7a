//! Small statistics toolkit for the Monte Carlo checks: moments, rank
//! correlation, Kolmogorov–Smirnov, Jarque–Bera and Clopper–Pearson
//! intervals.

use statrs::function::beta::beta_reg;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn variance(xs: &[f64]) -> f64 {
    std_dev(xs).powi(2)
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Jarque–Bera normality test with the asymptotic χ²(2) p-value
/// `exp(-JB/2)`.
pub fn jarque_bera(xs: &[f64]) -> TestOutcome {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    TestOutcome { statistic: jb, p_value: (-jb / 2.0).exp() }
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value with the Stephens small-sample correction
/// `λ = (√n + 0.12 + 0.11/√n) D`.
fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> TestOutcome {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    TestOutcome { statistic: d, p_value: ks_p_value(d, n) }
}

/// Two-sample KS test.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> TestOutcome {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    TestOutcome { statistic: d, p_value: ks_p_value(d, na * nb / (na + nb)) }
}

/// One-sided Clopper–Pearson bounds at the given confidence for `k`
/// successes out of `n` trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClopperPearson {
    pub lower: f64,
    pub upper: f64,
}

pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> ClopperPearson {
    assert!(n > 0 && k <= n);
    assert!(confidence > 0.0 && confidence < 1.0);
    let alpha = 1.0 - confidence;
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 { 0.0 } else { beta_quantile(kf, nf - kf + 1.0, alpha) };
    let upper = if k == n { 1.0 } else { beta_quantile(kf + 1.0, nf - kf, 1.0 - alpha) };
    ClopperPearson { lower, upper }
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta.
pub fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Equal-width histogram counts over `[lo, hi]`; the top edge is inclusive.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        if x < lo || x > hi {
            continue;
        }
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_of_monotone_maps() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let up: Vec<f64> = xs.iter().map(|x| x.powi(3)).collect();
        let down: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
        assert!((spearman(&xs, &up) - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &down) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0099 (standard critical values).
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 5e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_two_sample_identical_samples() {
        let xs = [0.1, 0.5, -0.3, 0.9];
        let out = ks_two_sample(&xs, &xs);
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 1.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 10.0).collect();
        assert_eq!(ks_two_sample(&xs, &shifted).statistic, 1.0);
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let out = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((out.statistic - 0.005).abs() < 1e-12);
    }

    #[test]
    fn jarque_bera_of_symmetric_two_point_sample() {
        // Two-point distribution: skew 0, kurtosis 1 -> JB = n/6 * 1.
        let xs: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let jb = jarque_bera(&xs);
        assert!((jb.statistic - 10.0).abs() < 1e-12);
        assert!((jb.p_value - (-5.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn clopper_pearson_edges() {
        let zero = clopper_pearson(0, 1000, 0.999);
        assert_eq!(zero.lower, 0.0);
        // Exact: 1 - 0.001^(1/1000).
        assert!((zero.upper - (1.0 - 0.001f64.powf(1.0 / 1000.0))).abs() < 1e-9);
        let all = clopper_pearson(50, 50, 0.999);
        assert_eq!(all.upper, 1.0);
        assert!((all.lower - 0.001f64.powf(1.0 / 50.0)).abs() < 1e-9);
        let mid = clopper_pearson(500, 1000, 0.999);
        assert!(mid.lower < 0.5 && mid.upper > 0.5);
    }

    #[test]
    fn histogram_counts_edges() {
        let h = histogram(&[-1.0, 0.0, 1.0, 0.99, 2.0], -1.0, 1.0, 4);
        assert_eq!(h, vec![1, 0, 1, 2]);
    }
}
