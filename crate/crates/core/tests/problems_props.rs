mod common;

use std::io::Cursor;

use common::*;
use prdr_core::linalg::verify_consistent;
use prdr_core::problems::gen_spectral_factors;
use prdr_core::problems::{parse_matrix_market, read_matrix_market, write_matrix_market, write_matrix_market_to};
use prdr_core::{gen_spectral, gen_uniform, make_consistent, min_norm_solution, DenseMatrix};
use proptest::prelude::*;

#[test]
fn spectral_generator_is_exact_and_orthonormal() {
    for (seed, (m, n, r, s1)) in [(60, 25, 10, 100.0), (40, 40, 40, 10.0), (30, 80, 5, 1000.0)].into_iter().enumerate() {
        let (a, f) = gen_spectral_factors(m, n, r, s1, 1.0, seed as u64).unwrap();
        let sv = a.to_nalgebra().svd(false, false).singular_values;
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        assert!((sv[0] - s1).abs() <= 1e-9 * s1);
        for s in &sv[1..r] {
            assert!((s - 1.0).abs() <= 1e-9);
        }
        assert!(sv[r..].iter().all(|&s| s <= 1e-9 * s1));
        for q in [&f.u, &f.v] {
            let q = q.to_nalgebra();
            let g = q.transpose() * &q;
            assert!((g - nalgebra::DMatrix::identity(r, r)).abs().max() <= 1e-10);
        }
    }
}

#[test]
fn generators_are_seed_deterministic() {
    assert_eq!(gen_spectral(20, 10, 4, 10.0, 1.0, 3).unwrap(), gen_spectral(20, 10, 4, 10.0, 1.0, 3).unwrap());
    assert_ne!(gen_spectral(20, 10, 4, 10.0, 1.0, 3).unwrap(), gen_spectral(20, 10, 4, 10.0, 1.0, 4).unwrap());
    assert_eq!(gen_uniform(20, 10, 0.2, 3).unwrap(), gen_uniform(20, 10, 0.2, 3).unwrap());
    let p = make_consistent(gen_uniform(5, 3, 0.0, 1).unwrap(), 9);
    let q = make_consistent(gen_uniform(5, 3, 0.0, 1).unwrap(), 9);
    assert_eq!(p.b, q.b);
}

#[test]
fn high_threshold_uniform_rows_are_coherent() {
    let a = gen_uniform(100, 100, 0.95, 8).unwrap();
    let mut worst = 1.0f64;
    for i in 0..100 {
        for j in (i + 1)..100 {
            let c = dotv(a.row(i), a.row(j)) / (normv(a.row(i)) * normv(a.row(j)));
            worst = worst.min(c);
        }
    }
    assert!(worst >= 0.99, "{worst}");
    assert!(a.as_slice().iter().all(|&v| (0.95..=1.0).contains(&v)));
}

#[test]
fn consistent_problems_verify_and_rank_deficient_references_differ() {
    let mut r = rng(51);
    let a = gaussian_rank(&mut r, 12, 8, 4);
    let p = make_consistent(a, 2);
    let x_star = p.x_star.clone().unwrap();
    assert_eq!(p.a.matvec(&x_star), p.b);
    verify_consistent(&p.a, &p.b, &x_star).unwrap();
    let x_ref = p.reference_solution(&vec![0.0; 8]).unwrap();
    assert!(normv(&diff(&p.a.matvec(&x_ref), &p.b)) <= 1e-10 * normv(&p.b));
    assert!(normv(&diff(&x_ref, &x_star)) > 1e-3);
    let oracle = pinv_solve(&p.a, &p.b);
    assert!(normv(&diff(&x_ref, &oracle)) <= 1e-10 * normv(&oracle));
    assert!(normv(&diff(&min_norm_solution(&p.a, &p.b).unwrap(), &x_ref)) <= 1e-12 * normv(&x_ref));
}

fn matrix() -> impl Strategy<Value = DenseMatrix> {
    (1usize..8, 1usize..8).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop_oneof![Just(0.0), any::<f64>().prop_filter("finite", |v| v.is_finite())], m * n)
            .prop_map(move |d| DenseMatrix::from_row_major(m, n, d).unwrap())
    })
}

proptest! {
    #[test]
    fn matrix_market_round_trip_is_lossless(a in matrix()) {
        let mut buf = Vec::new();
        write_matrix_market_to(&mut buf, &a).unwrap();
        let back = parse_matrix_market(Cursor::new(buf)).unwrap();
        prop_assert_eq!(back, a);
    }
}

#[test]
fn matrix_market_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mtx");
    std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n% c\n2 2 2\n1 1 3.0\n2 2 1.0\n").unwrap();
    let a = read_matrix_market(&path).unwrap();
    assert_eq!(a, DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, 1.0]]).unwrap());
    std::fs::write(
        &path,
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 1 -1\n3 2 5\n3 3 1\n",
    )
    .unwrap();
    let s = read_matrix_market(&path).unwrap();
    assert_eq!(s, s.transpose());
    assert_eq!(s.get(0, 1), -1.0);
    assert_eq!(s.get(1, 2), 5.0);
    let g = gen_spectral(7, 5, 3, 10.0, 1.0, 1).unwrap();
    write_matrix_market(&path, &g).unwrap();
    assert_eq!(read_matrix_market(&path).unwrap(), g);
}
