use dsm_spectra::dsm::{self, SinkhornConfig, StochasticMatrix};
use dsm_spectra::geometry;
use dsm_spectra::linalg::{self, DenseMatrix};
use dsm_spectra::rng::{derive_trial_seed, StreamRole, TrialRng};
use dsm_spectra::spectral;
use dsm_spectra::Error;

fn dsm_at(n: usize, t: f64, seed: u32) -> StochasticMatrix {
    dsm::sinkhorn_generate(&SinkhornConfig::new(n, t, derive_trial_seed(seed, 0, StreamRole::Cost))).unwrap()
}

fn apply(m: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j) * x[j]).sum()).collect()
}

fn apply_t(m: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (0..m.cols()).map(|j| (0..m.rows()).map(|i| m.get(i, j) * x[i]).sum()).collect()
}

fn center(x: &mut [f64]) {
    let mu = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mu);
}

fn unit(x: &mut [f64]) -> f64 {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    nrm
}

/// sup of ‖Mx‖ over unit x ⊥ 1, by power iteration on P⊥MᵀMP⊥.
fn power_iteration_sup(m: &DenseMatrix, rng: &mut TrialRng) -> f64 {
    let mut x: Vec<f64> = (0..m.cols()).map(|_| rng.uniform() - 0.5).collect();
    center(&mut x);
    unit(&mut x);
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let mut y = apply_t(m, &apply(m, &x));
        center(&mut y);
        lambda = unit(&mut y);
        x = y;
    }
    lambda.sqrt()
}

#[test]
fn sigma2_agrees_with_power_iteration_and_random_sup() {
    let mut rng = TrialRng::from_seed(5);
    for (t, seed) in [(0.2, 0), (1.0, 1), (5.0, 2)] {
        let m = dsm_at(64, t, seed);
        let s2 = spectral::sigma2(&m).unwrap();
        let oracle = power_iteration_sup(m.matrix(), &mut rng);
        assert!(oracle <= s2 + 1e-12 && s2 - oracle <= 1e-3, "T={t}: sigma2 {s2} vs oracle {oracle}");
        let mut best: f64 = 0.0;
        for _ in 0..10_000 {
            let x = geometry::uniform_sphere_sample(64, &mut rng).unwrap();
            best = best.max(linalg::norm2(&m.matrix().matvec(&x).unwrap()));
        }
        assert!(best <= s2 + 1e-12, "T={t}: random direction {best} exceeds sigma2 {s2}");
    }
}

#[test]
fn sigma2_trivial_operators() {
    assert!(spectral::sigma2(&StochasticMatrix::uniform(16)).unwrap() < 1e-15);
    assert!((spectral::sigma2(&StochasticMatrix::identity(16)).unwrap() - 1.0).abs() < 1e-12);
    let p = StochasticMatrix::permutation(&[3, 0, 4, 1, 2]);
    assert!((spectral::sigma2(&p).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn sigma2_lies_in_unit_interval_for_dsms() {
    for (i, t) in [0.05, 0.1, 0.5, 2.0, 10.0].into_iter().enumerate() {
        let d = spectral::sigma2_detailed(&dsm_at(32, t, i as u32)).unwrap();
        assert!((0.0..=1.0).contains(&d.restricted));
        assert!(d.gap() <= 1e-8);
    }
}

#[test]
fn perron_check_examples() {
    let u = spectral::perron_check(StochasticMatrix::uniform(8).matrix()).unwrap();
    assert!(u.passed && (u.sigma1 - 1.0).abs() < 1e-14);
    let half = spectral::perron_check(&StochasticMatrix::uniform(8).matrix().scale(0.5)).unwrap();
    assert!(!half.passed && (half.sigma1 - 0.5).abs() < 1e-14);
    for seed in 0..20 {
        assert!(spectral::perron_check(dsm_at(64, 1.0, seed).matrix()).unwrap().passed);
    }
}

#[test]
fn effective_depth_examples() {
    let e1 = (-1.0f64).exp();
    assert!((spectral::effective_depth(e1, e1).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(spectral::effective_depth(0.0, 0.01).unwrap(), 0.0);
    let d = spectral::effective_depth(0.5, 0.01).unwrap();
    assert!((d - 100f64.ln() / 2f64.ln()).abs() < 1e-6 && (d - 6.6439).abs() < 1e-4);
    assert_eq!(spectral::effective_depth(1.0, 0.01).unwrap(), f64::INFINITY);
    for eps in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(matches!(spectral::effective_depth(0.5, eps), Err(Error::InvalidEpsilon(_))));
    }
}

/// Orthonormal basis (as columns) of the detail subspace of R³.
fn detail_basis_3() -> DenseMatrix {
    let (a, b) = (1.0 / 2f64.sqrt(), 1.0 / 6f64.sqrt());
    DenseMatrix::from_rows(&[vec![a, b], vec![-a, b], vec![0.0, -2.0 * b]]).unwrap()
}

fn norm_2x2(m: [[f64; 2]; 2]) -> f64 {
    let fro = m.iter().flatten().map(|v| v * v).sum::<f64>();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    ((fro + (fro * fro - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

fn mul_2x2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn embedded(b: [[f64; 2]; 2]) -> DenseMatrix {
    let q = detail_basis_3();
    let bm = DenseMatrix::from_rows(&[b[0].to_vec(), b[1].to_vec()]).unwrap();
    q.matmul(&bm).unwrap().matmul(&q.transpose()).unwrap()
}

fn check_embedded_profile(b: [[f64; 2]; 2], depth: usize) -> spectral::TransientProfile {
    let profile = spectral::transient_growth(&embedded(b), depth).unwrap();
    let mut power = b;
    for (k, v) in &profile.profile {
        if *k > 1 {
            power = mul_2x2(power, b);
        }
        let exact = norm_2x2(power);
        assert!((v - exact).abs() <= 1e-9 * exact.max(1.0), "k={k}: {v} vs {exact}");
    }
    profile
}

#[test]
fn embedded_non_normal_matrix_shows_transient_growth() {
    let b = [[0.8, 10.0], [0.0, 0.8]];
    let p = check_embedded_profile(b, 30);
    let first = p.profile[0].1;
    assert!(p.max > first && p.argmax > 1, "{p:?}");
    assert!(p.profile.iter().any(|&(k, v)| v > 0.8f64.powi(k as i32)));
}

#[test]
fn half_diagonal_example_peaks_at_the_first_power() {
    let b = [[0.5, 10.0], [0.0, 0.5]];
    let p = check_embedded_profile(b, 30);
    assert_eq!(p.argmax, 1);
    assert!(p.profile.iter().all(|&(k, v)| v > 0.5f64.powi(k as i32)));
}

#[test]
fn transient_profile_examples() {
    let id = spectral::transient_growth(&DenseMatrix::identity(5), 10).unwrap();
    assert!(id.profile.iter().all(|&(_, v)| (v - 1.0).abs() < 1e-12));
    assert_eq!(id.argmax, 1);
    for seed in 0..5 {
        let m = dsm_at(32, 0.2, seed);
        let s2 = spectral::sigma2(&m).unwrap();
        let p = spectral::transient_growth(m.matrix(), spectral::DEFAULT_TRANSIENT_DEPTH).unwrap();
        for &(k, v) in &p.profile {
            assert!(v <= s2.powi(k as i32) + 1e-9, "k={k}: {v} > {}", s2.powi(k as i32));
        }
    }
    assert!(spectral::transient_growth(&DenseMatrix::identity(3), 0).is_err());
}

#[test]
fn contraction_check_examples() {
    let mut rng = TrialRng::from_seed(8);
    assert!(spectral::contraction_check(&StochasticMatrix::uniform(6), 100, &mut rng).unwrap() < 1e-15);
    let p = StochasticMatrix::permutation(&[1, 2, 3, 4, 5, 0]);
    assert!((spectral::contraction_check(&p, 100, &mut rng).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn contraction_ratio_is_bounded_and_nearly_attained_in_low_dimension() {
    let mut rng = TrialRng::from_seed(9);
    for n in [3, 4] {
        for seed in 0..10 {
            let m = dsm_at(n, 0.3, seed);
            let s2 = spectral::sigma2(&m).unwrap();
            let best = spectral::contraction_check(&m, 10_000, &mut rng).unwrap();
            assert!(best <= s2 + 1e-9, "n={n}: ratio {best} above sigma2 {s2}");
            assert!(best >= 0.99 * s2, "n={n}: ratio {best} far below sigma2 {s2}");
        }
    }
    let m = dsm_at(64, 1.0, 0);
    let s2 = spectral::sigma2(&m).unwrap();
    assert!(spectral::contraction_check(&m, 10_000, &mut rng).unwrap() <= s2 + 1e-9);
}

#[test]
fn powers_contract_detail_at_rate_sigma2() {
    let mut rng = TrialRng::from_seed(10);
    for seed in 0..10 {
        let m = dsm_at(64, 0.1, seed);
        let s2 = spectral::sigma2(&m).unwrap();
        let x = geometry::uniform_sphere_sample(64, &mut rng).unwrap();
        let mut y = x.clone();
        for k in 1..=50 {
            y = m.matrix().matvec(&y).unwrap();
            assert!(linalg::norm2(&y) <= s2.powi(k) + 1e-9, "k={k}");
        }
        let k = linalg::matrix_power_apply(m.matrix(), &x, 50).unwrap();
        assert_eq!(k, y);
    }
}

#[test]
fn report_row_has_declared_columns() {
    let m = dsm_at(16, 1.0, 0);
    let r = spectral::spectral_report(&m, 0, 1.0, 0.01, 10).unwrap();
    assert_eq!(r.csv_fields().len(), spectral::SpectralReport::CSV_HEADER.len());
    assert!(r.sigma1 >= r.sigma2 && r.sigma2 >= 0.0);
    let inf = spectral::spectral_report(&StochasticMatrix::identity(4), 0, 1.0, 0.01, 3).unwrap();
    assert!(inf.csv_fields().contains(&"inf".to_string()));
}
