use approx::assert_relative_eq;
use proptest::collection::vec;
use proptest::prelude::*;

use dsm_spectra::concentration;
use dsm_spectra::dsm::{self, SinkhornConfig};
use dsm_spectra::geometry::{self, FeatureVector};
use dsm_spectra::linalg::{self, norm2, project_detail, DenseMatrix};
use dsm_spectra::spectral;

fn square(max: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max).prop_flat_map(|n| vec(-10.0..10.0f64, n * n).prop_map(move |d| DenseMatrix::from_row_major(n, n, d).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spectral_norm_dominates_every_rayleigh_quotient(m in square(7), seed in vec(-1.0..1.0f64, 7)) {
        let u: Vec<f64> = seed[..m.cols()].to_vec();
        let nu = norm2(&u);
        prop_assume!(nu > 1e-6);
        let s = linalg::spectral_norm(&m).unwrap();
        prop_assert!(norm2(&m.matvec(&u).unwrap()) / nu <= s * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn singular_values_are_sorted_and_match_frobenius(m in square(6)) {
        let r = linalg::svd(&m, false).unwrap();
        prop_assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let fro: f64 = m.as_slice().iter().map(|v| v * v).sum();
        let ss: f64 = r.singular_values.iter().map(|v| v * v).sum();
        assert_relative_eq!(fro, ss, max_relative = 1e-10, epsilon = 1e-12);
    }

    #[test]
    fn detail_projection_is_idempotent(x in vec(-100.0..100.0f64, 2..40)) {
        let p = project_detail(&x);
        let pp = project_detail(&p);
        for (a, b) in p.iter().zip(&pp) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
        prop_assert!(p.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn detail_projection_fixes_zero_sum_vectors(x in vec(-100.0..100.0f64, 2..40)) {
        let z: Vec<f64> = { let mu = linalg::mean(&x); x.iter().map(|v| v - mu).collect() };
        for (a, b) in project_detail(&z).iter().zip(&z) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn layer_norm_output_is_centered_with_norm_sqrt_n(x in vec(-50.0..50.0f64, 2..64)) {
        let y = FeatureVector::new(x);
        prop_assume!(y.detail_norm() > 1e-6);
        let out = geometry::layer_norm(&y).unwrap();
        let n = out.values().len() as f64;
        prop_assert!(linalg::mean(out.values()).abs() < 1e-12);
        assert_relative_eq!(out.norm(), n.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn theorem1_bound_is_monotone(g1 in 0.0..0.125f64, g2 in 0.0..0.125f64, e1 in 1e-3..1.0f64, e2 in 1e-3..1.0f64) {
        let (glo, ghi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let b = |g, e| concentration::theorem1_bound(g, e).unwrap().bound;
        prop_assert!(b(glo, elo) <= b(ghi, elo));
        prop_assert!(b(glo, elo) <= b(glo, ehi));
    }

    #[test]
    fn wedin_sin_theta_is_a_sine(a in vec(-5.0..5.0f64, 25), e in vec(-5.0..5.0f64, 25), r in 1usize..5) {
        let a = DenseMatrix::from_row_major(5, 5, a).unwrap();
        let e = DenseMatrix::from_row_major(5, 5, e).unwrap();
        if let Ok(w) = concentration::wedin_sin_theta(&a, &e, r) {
            prop_assert!((0.0..=1.0).contains(&w.sin_theta));
            prop_assert!(w.holds());
        }
    }

    #[test]
    fn sinkhorn_output_is_stochastic_with_sigma2_in_unit_interval(n in 2usize..24, t in 0.3..20.0f64, seed in any::<u64>()) {
        let m = dsm::sinkhorn_generate(&SinkhornConfig::new(n, t, seed)).unwrap();
        prop_assert!(m.matrix().as_slice().iter().all(|&v| v > 0.0));
        let s2 = spectral::sigma2(&m).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s2));
        assert_relative_eq!(linalg::spectral_norm(m.matrix()).unwrap(), 1.0, epsilon = 1e-6);
    }
}
