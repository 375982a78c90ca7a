use dsm_spectra::linalg::{self, DenseMatrix};
use dsm_spectra::rng::TrialRng;
use dsm_spectra::Error;

fn random_matrix(rows: usize, cols: usize, rng: &mut TrialRng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

/// Eigenvalues of a symmetric 3x3 matrix from the closed-form roots of its
/// characteristic cubic, descending.
fn symmetric_3x3_eigenvalues(a: &DenseMatrix) -> [f64; 3] {
    let g = |i, j| a.get(i, j);
    let p1 = g(0, 1).powi(2) + g(0, 2).powi(2) + g(1, 2).powi(2);
    let q = (g(0, 0) + g(1, 1) + g(2, 2)) / 3.0;
    let p2 = (g(0, 0) - q).powi(2) + (g(1, 1) - q).powi(2) + (g(2, 2) - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |i, j| (g(i, j) - if i == j { q } else { 0.0 }) / p;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

#[test]
fn svd_matches_characteristic_cubic_of_gram_matrix() {
    let mut rng = TrialRng::from_seed(31);
    for _ in 0..200 {
        let m = random_matrix(3, 3, &mut rng);
        let gram = m.transpose().matmul(&m).unwrap();
        let eig = symmetric_3x3_eigenvalues(&gram);
        let s = linalg::svd(&m, false).unwrap().singular_values;
        for (sv, ev) in s.iter().zip(eig) {
            assert!((sv - ev.max(0.0).sqrt()).abs() < 1e-9, "{s:?} vs {eig:?}");
        }
    }
}

#[test]
fn svd_trivial_cases() {
    assert_eq!(linalg::svd(&DenseMatrix::identity(4), false).unwrap().singular_values, vec![1.0; 4]);
    let s = linalg::svd(&DenseMatrix::diagonal(&[1.0, 3.0, 2.0]), false).unwrap().singular_values;
    assert_eq!(s, vec![3.0, 2.0, 1.0]);
    assert_eq!(linalg::spectral_norm(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
}

#[test]
fn svd_rejects_non_finite_input() {
    let r = DenseMatrix::from_row_major(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]);
    assert!(matches!(r, Err(Error::NonFinite)));
}

#[test]
fn svd_reconstructs_random_8x8() {
    let mut rng = TrialRng::from_seed(32);
    for _ in 0..50 {
        let m = random_matrix(8, 8, &mut rng);
        let svd = linalg::svd(&m, true).unwrap();
        let u = svd.left_vectors.as_ref().unwrap();
        let v = svd.right_vectors.as_ref().unwrap();
        let sigma = DenseMatrix::diagonal(&svd.singular_values);
        let rebuilt = u.matmul(&sigma).unwrap().matmul(&v.transpose()).unwrap();
        let err = linalg::spectral_norm(&rebuilt.sub(&m).unwrap()).unwrap();
        assert!(err <= 1e-9 * svd.singular_values[0], "reconstruction error {err}");
        for q in [u, v] {
            let gram = q.transpose().matmul(q).unwrap();
            let off = gram.sub(&DenseMatrix::identity(gram.rows())).unwrap().max_abs();
            assert!(off <= 1e-9, "orthonormality error {off}");
        }
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn svd_is_deterministic() {
    let m = random_matrix(16, 16, &mut TrialRng::from_seed(33));
    let a = linalg::svd(&m, true).unwrap();
    let b = linalg::svd(&m, true).unwrap();
    assert_eq!(a.singular_values, b.singular_values);
    assert_eq!(a.left_vectors, b.left_vectors);
}

#[test]
fn spectral_norm_of_sinkhorn_dsm_is_one() {
    let m = dsm_spectra::dsm::sinkhorn_generate(&dsm_spectra::dsm::SinkhornConfig::new(64, 1.0, 0)).unwrap();
    assert!((linalg::spectral_norm(m.matrix()).unwrap() - 1.0).abs() <= 1e-7);
}

#[test]
fn matrix_power_apply_examples() {
    let swap = DenseMatrix::permutation(&[1, 0]);
    assert_eq!(linalg::matrix_power_apply(&swap, &[1.0, 2.0], 3).unwrap(), vec![2.0, 1.0]);
    assert_eq!(linalg::matrix_power_apply(&swap, &[1.0, 2.0], 0).unwrap(), vec![1.0, 2.0]);
    let x = [0.3, -1.0, 2.5];
    assert_eq!(linalg::matrix_power_apply(&DenseMatrix::identity(3), &x, 5).unwrap(), x.to_vec());
    assert!(matches!(
        linalg::matrix_power_apply(&swap, &[1.0, 2.0, 3.0], 1),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn project_detail_examples() {
    assert_eq!(linalg::project_detail(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
    assert!(linalg::project_detail(&[4.2; 7]).iter().all(|&v| v == 0.0));
    let zero_mean = [1.5, -0.5, -1.0];
    assert_eq!(linalg::project_detail(&zero_mean), zero_mean.to_vec());
}
