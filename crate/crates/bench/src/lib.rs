//! Shared fixtures for the benchmarks.

use prdr_core::{gen_spectral, make_consistent, LinearProblem};

/// Consistent system on a spectral test matrix with `r = n/2`.
pub fn fixture(m: usize, n: usize, sigma1: f64, seed: u64) -> LinearProblem {
    let a = gen_spectral(m, n, n / 2, sigma1, 1.0, seed).expect("valid generator parameters");
    make_consistent(a, seed)
}
