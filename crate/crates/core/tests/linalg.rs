mod common;

use common::{max_orthonormality_error, naive_matmul, oracle_singular_values, projector};
use proptest::prelude::*;
use rsvd::linalg::{
    masked_sq_norm, parse_matrix_csv, thin_qr, thin_svd, thin_svd_with, truncated_svd, write_matrix_csv, SvdMethod,
};
use rsvd::synthetic::{gaussian_matrix, low_rank_matrix, uniform_matrix};
use rsvd::DenseMatrix;

#[test]
fn svd_of_seeded_8x6_matches_eigen_oracle() {
    let x = uniform_matrix(8, 6, -1.0, 1.0, 42);
    let svd = thin_svd(&x, None).unwrap();
    let oracle = oracle_singular_values(&x);
    for (s, o) in svd.sigma.iter().zip(&oracle) {
        assert!((s - o).abs() < 1e-8, "{s} vs {o}");
    }
    assert!(svd.reconstruct().max_abs_diff(&x) < 1e-8);
}

#[test]
fn qr_of_seeded_6x3_reconstructs() {
    let v = uniform_matrix(6, 3, -1.0, 1.0, 7);
    let qr = thin_qr(&v).unwrap();
    assert!(max_orthonormality_error(&qr.q) < 1e-10);
    assert!(naive_matmul(&qr.q, &qr.r).max_abs_diff(&v) < 1e-12);
    for i in 0..3 {
        assert!(qr.r[(i, i)] >= 0.0);
        for j in 0..i {
            assert_eq!(qr.r[(i, j)], 0.0);
        }
    }
}

#[test]
fn lanczos_agrees_with_jacobi_on_large_operator() {
    let x = low_rank_matrix(260, 220, 12, 5).add(&gaussian_matrix(260, 220, 6).scale(0.01)).unwrap();
    let jac = thin_svd_with(&x, Some(5), SvdMethod::Jacobi).unwrap();
    let lan = thin_svd_with(&x, Some(5), SvdMethod::Lanczos).unwrap();
    for (a, b) in jac.sigma.iter().zip(&lan.sigma) {
        assert!((a - b).abs() < 1e-8 * jac.sigma[0], "{a} vs {b}");
    }
    assert!(projector(&jac.f).max_abs_diff(&projector(&lan.f)) < 1e-6);
    let direct = truncated_svd(&x, 5, None).unwrap();
    assert!((direct.sigma[4] - jac.sigma[4]).abs() < 1e-8 * jac.sigma[0]);
}

#[test]
fn matrix_csv_round_trips_exactly() {
    let x = gaussian_matrix(4, 3, 11);
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, &x, &["seed=11".to_string()]).unwrap();
    let back = parse_matrix_csv(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
    assert_eq!(back, x);
}

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_dim, 1..=max_dim, any::<u64>()).prop_map(|(r, c, seed)| uniform_matrix(r, c, -3.0, 3.0, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_invariants(x in matrix_strategy(50)) {
        let svd = thin_svd(&x, None).unwrap();
        prop_assert!(max_orthonormality_error(&svd.f) < 1e-10);
        prop_assert!(max_orthonormality_error(&svd.g) < 1e-10);
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.sigma.iter().all(|&s| s >= 0.0));
        let scale = x.frobenius_norm().max(1.0);
        prop_assert!(svd.reconstruct().max_abs_diff(&x) < 1e-8 * scale);
    }

    #[test]
    fn svd_matches_oracle(x in matrix_strategy(20)) {
        let svd = thin_svd(&x, None).unwrap();
        let oracle = oracle_singular_values(&x);
        let top = oracle[0].max(1e-300);
        for (s, o) in svd.sigma.iter().zip(&oracle) {
            prop_assert!((s - o).abs() <= 1e-8 * top, "{} vs {}", s, o);
        }
    }

    #[test]
    fn qr_round_trip(v in (2..30usize, 1..8usize, any::<u64>()).prop_map(|(extra, c, s)| uniform_matrix(c + extra, c, -1.0, 1.0, s))) {
        let qr = thin_qr(&v).unwrap();
        let again = thin_qr(&naive_matmul(&qr.q, &qr.r)).unwrap();
        prop_assert!(again.q.max_abs_diff(&qr.q) < 1e-10);
        prop_assert!(again.r.max_abs_diff(&qr.r) < 1e-10);
        prop_assert!(max_orthonormality_error(&qr.q) < 1e-10);
    }

    #[test]
    fn masked_norm_full_set_is_frobenius(x in matrix_strategy(12)) {
        let all: Vec<_> = (0..x.rows()).flat_map(|i| (0..x.cols()).map(move |j| (i, j))).collect();
        prop_assert_eq!(masked_sq_norm(&x, &all).unwrap(), x.frobenius_sq());
        prop_assert_eq!(masked_sq_norm(&x, &[]).unwrap(), 0.0);
        prop_assert_eq!(x.sub(&x).unwrap().frobenius_sq(), 0.0);
    }
}
