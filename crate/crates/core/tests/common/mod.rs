#![allow(dead_code)]

use nalgebra::DMatrix;
use prdr_core::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

pub fn gaussian(r: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::from_row_major(m, n, normal_vec(r, m * n)).unwrap()
}

/// Product of Gaussian `m x k` and `k x n` factors.
pub fn gaussian_rank(r: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> DenseMatrix {
    let f = gaussian(r, m, k).to_nalgebra();
    let g = gaussian(r, k, n).to_nalgebra();
    DenseMatrix::from_nalgebra(&(f * g)).unwrap()
}

pub fn dotv(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn normv(x: &[f64]) -> f64 {
    dotv(x, x).sqrt()
}

pub fn diff(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Orthonormal basis of `null(A)` from an SVD computed here.
pub fn null_basis(a: &DenseMatrix) -> Vec<Vec<f64>> {
    let n = a.ncols();
    let mut padded = DMatrix::zeros(a.nrows().max(n), n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(&a.to_nalgebra());
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax;
    (0..n)
        .filter(|&k| svd.singular_values[k] <= cut)
        .map(|k| vt.row(k).iter().copied().collect())
        .collect()
}

/// Least-squares solution via an SVD pseudo-inverse computed here.
pub fn pinv_solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let m = a.to_nalgebra();
    let smax = m.clone().svd(false, false).singular_values.max();
    let p = m.pseudo_inverse(1e-10 * smax).unwrap();
    (p * nalgebra::DVector::from_column_slice(b)).iter().copied().collect()
}
