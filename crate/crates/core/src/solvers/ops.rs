//! Hyperplane primitives and single-step updates.
//!
//! These allocate their outputs and are meant for direct use and testing;
//! the iteration driver in [`super::Stepper`] reimplements the same
//! arithmetic on scratch buffers.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, DenseMatrix};

/// Fallback `(α, β)` when the adaptive parameters are undefined.
pub const FALLBACK_ALPHA: f64 = 0.5;
/// Relative Gram-determinant guard for the adaptive parameters.
pub const DENOM_GUARD: f64 = 1e-14;

fn signed_distance_coef(x: &[f64], a: &[f64], bi: f64) -> Result<f64> {
    let nsq = norm_sq(a);
    if nsq == 0.0 {
        return Err(Error::ZeroRow(0));
    }
    Ok((dot(a, x) - bi) / nsq)
}

/// `x - (⟨a,x⟩ - b_i)/‖a‖² · a`
pub fn project_hyperplane(x: &[f64], a: &[f64], bi: f64) -> Result<Vec<f64>> {
    let c = signed_distance_coef(x, a, bi)?;
    Ok(x.iter().zip(a).map(|(xi, ai)| xi - c * ai).collect())
}

/// `x - 2(⟨a,x⟩ - b_i)/‖a‖² · a`
pub fn reflect_hyperplane(x: &[f64], a: &[f64], bi: f64) -> Result<Vec<f64>> {
    let c = 2.0 * signed_distance_coef(x, a, bi)?;
    Ok(x.iter().zip(a).map(|(xi, ai)| xi - c * ai).collect())
}

/// `z = R_{i2}(R_{i1}(x))` together with the coefficients of
/// `z = x - 2u·a_{i1} - 2v·a_{i2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleReflection {
    pub z: Vec<f64>,
    pub u: f64,
    pub v: f64,
}

/// `(⟨x,a1⟩, ⟨x,a2⟩, ⟨a1,a2⟩)` in one pass, four lanes wide.
#[inline]
pub(crate) fn dot3(x: &[f64], a1: &[f64], a2: &[f64]) -> (f64, f64, f64) {
    let n = x.len();
    debug_assert!(a1.len() == n && a2.len() == n);
    let (mut s1, mut s2, mut s3) = ([0.0f64; 4], [0.0f64; 4], [0.0f64; 4]);
    let split = n - n % 4;
    for ((xc, pc), qc) in x[..split]
        .chunks_exact(4)
        .zip(a1[..split].chunks_exact(4))
        .zip(a2[..split].chunks_exact(4))
    {
        for l in 0..4 {
            s1[l] += xc[l] * pc[l];
            s2[l] += xc[l] * qc[l];
            s3[l] += pc[l] * qc[l];
        }
    }
    for k in split..n {
        s1[0] += x[k] * a1[k];
        s2[0] += x[k] * a2[k];
        s3[0] += a1[k] * a2[k];
    }
    let sum = |s: [f64; 4]| (s[0] + s[1]) + (s[2] + s[3]);
    (sum(s1), sum(s2), sum(s3))
}

/// Coefficients `(u, v)` of the double reflection, from three inner products.
#[inline]
pub(crate) fn reflection_coefficients(
    x: &[f64],
    a1: &[f64],
    a2: &[f64],
    b1: f64,
    b2: f64,
    n1: f64,
    n2: f64,
) -> (f64, f64, f64, f64) {
    let (p1, p2, a12) = dot3(x, a1, a2);
    let r1 = p1 - b1;
    let r2 = p2 - b2;
    let u = r1 / n1;
    let v = (r2 - 2.0 * a12 * u) / n2;
    (u, v, r1, r2)
}

pub fn double_reflect(
    x: &[f64],
    pair: (usize, usize),
    a: &DenseMatrix,
    b: &[f64],
) -> Result<DoubleReflection> {
    let (i1, i2) = pair;
    let (a1, a2) = (a.row(i1), a.row(i2));
    let (n1, n2) = (norm_sq(a1), norm_sq(a2));
    if n1 == 0.0 {
        return Err(Error::ZeroRow(i1));
    }
    if n2 == 0.0 {
        return Err(Error::ZeroRow(i2));
    }
    let (u, v, _, _) = reflection_coefficients(x, a1, a2, b[i1], b[i2], n1, n2);
    let z = x
        .iter()
        .zip(a1.iter().zip(a2))
        .map(|(xi, (p, q))| xi - 2.0 * u * p - 2.0 * v * q)
        .collect();
    Ok(DoubleReflection { z, u, v })
}

/// `(1 - α) x + α z`
pub fn prdr_step(
    x: &[f64],
    pair: (usize, usize),
    alpha: f64,
    a: &DenseMatrix,
    b: &[f64],
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let dr = double_reflect(x, pair, a, b)?;
    Ok(x.iter().zip(&dr.z).map(|(xi, zi)| (1.0 - alpha) * xi + alpha * zi).collect())
}

/// `(1 - α) x + α z + β (x - x_prev)`
pub fn mrdr_step(
    x: &[f64],
    x_prev: &[f64],
    pair: (usize, usize),
    alpha: f64,
    beta: f64,
    a: &DenseMatrix,
    b: &[f64],
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("momentum must be nonnegative, got {beta}")));
    }
    let dr = double_reflect(x, pair, a, b)?;
    Ok(x.iter()
        .zip(&dr.z)
        .zip(x_prev)
        .map(|((xi, zi), pi)| (1.0 - alpha) * xi + alpha * zi + beta * (xi - pi))
        .collect())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("relaxation must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Step parameters of a Douglas-Rachford update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    /// Relaxation.
    pub alpha: f64,
    /// Momentum.
    pub beta: f64,
    pub u: f64,
    pub v: f64,
    /// True when the Gram-determinant guard replaced the closed form.
    pub guarded: bool,
}

/// Scalar inputs of the adaptive parameter formula, with
/// `w = u a_{i1} + v a_{i2}` (so `z = x - 2w`) and `d = x - x_prev`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct AdaptiveInputs {
    pub d_sq: f64,
    pub w_sq: f64,
    pub w_dot_d: f64,
    /// `⟨w, x⟩ - (u b_{i1} + v b_{i2})`, evaluated as `u r_1 + v r_2`.
    pub w_residual: f64,
}

/// Closed-form minimizer over `(α, β)` of the distance from
/// `x - 2α w + β d` to the projected solution, with every `x*`-dependent
/// inner product rewritten through `A x* = b`.
pub(crate) fn adaptive_params(inp: AdaptiveInputs) -> (f64, f64, bool) {
    let det = inp.d_sq * inp.w_sq - inp.w_dot_d * inp.w_dot_d;
    // guard on 1e-14 ‖d‖² ‖z - x‖², with ‖z - x‖² = 4‖w‖²
    if !(det > DENOM_GUARD * inp.d_sq * 4.0 * inp.w_sq) {
        return (FALLBACK_ALPHA, 0.0, true);
    }
    let alpha = inp.d_sq * inp.w_residual / (2.0 * det);
    let beta = inp.w_dot_d * inp.w_residual / det;
    (alpha, beta, false)
}

/// Adaptive relaxation and momentum for the step from `x` given the double
/// reflection `dr` of `x` through `pair`.
///
/// Uses only rows of `A`, entries of `b`, `x` and `x_prev`. Falls back to
/// `(1/2, 0)` when the 2x2 Gram determinant of `{w, d}` is below the guard,
/// which includes `x == x_prev`.
pub fn amprdr_params(
    x: &[f64],
    x_prev: &[f64],
    dr: &DoubleReflection,
    pair: (usize, usize),
    a: &DenseMatrix,
    b: &[f64],
    zero_tol: f64,
) -> Result<StepParams> {
    let step_sq: f64 = x.iter().zip(&dr.z).map(|(p, q)| (p - q) * (p - q)).sum();
    if step_sq.sqrt() <= zero_tol {
        return Err(Error::DegenerateStep);
    }
    let (i1, i2) = pair;
    let (a1, a2) = (a.row(i1), a.row(i2));
    let (u, v) = (dr.u, dr.v);
    let w: Vec<f64> = a1.iter().zip(a2).map(|(p, q)| u * p + v * q).collect();
    let d: Vec<f64> = x.iter().zip(x_prev).map(|(p, q)| p - q).collect();
    let inp = AdaptiveInputs {
        d_sq: norm_sq(&d),
        w_sq: norm_sq(&w),
        w_dot_d: dot(&w, &d),
        w_residual: u * (dot(a1, x) - b[i1]) + v * (dot(a2, x) - b[i2]),
    };
    let (alpha, beta, guarded) = adaptive_params(inp);
    Ok(StepParams {
        alpha,
        beta,
        u,
        v,
        guarded,
    })
}

/// `(1 - α) x + α z + β (x - x_prev)` for given parameters.
pub fn apply_params(x: &[f64], x_prev: &[f64], z: &[f64], p: &StepParams) -> Vec<f64> {
    x.iter()
        .zip(z)
        .zip(x_prev)
        .map(|((xi, zi), pi)| (1.0 - p.alpha) * xi + p.alpha * zi + p.beta * (xi - pi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_hyperplane(&[3.0, 2.0], &[1.0, 0.0], 1.0).unwrap(), vec![1.0, 2.0]);
        let on = [1.0, 7.0];
        assert_eq!(project_hyperplane(&on, &[1.0, 0.0], 1.0).unwrap(), on.to_vec());
        assert!(close(
            &project_hyperplane(&[1.0, 0.0], &[1.0, 1.0], 0.0).unwrap(),
            &[0.5, -0.5],
            1e-15
        ));
        assert!(matches!(project_hyperplane(&[1.0], &[0.0], 1.0), Err(Error::ZeroRow(_))));
    }

    #[test]
    fn reflection_examples() {
        assert_eq!(reflect_hyperplane(&[3.0, 2.0], &[1.0, 0.0], 1.0).unwrap(), vec![-1.0, 2.0]);
        let x = [0.3, -1.7, 2.2];
        let a = [1.0, 2.0, -0.5];
        let y = reflect_hyperplane(&x, &a, 0.4).unwrap();
        let back = reflect_hyperplane(&y, &a, 0.4).unwrap();
        assert!(close(&back, &x, 1e-14));
        assert!(reflect_hyperplane(&x, &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn double_reflection_examples() {
        let a = DenseMatrix::identity(2).unwrap();
        let dr = double_reflect(&[1.0, 1.0], (0, 1), &a, &[0.0, 0.0]).unwrap();
        assert_eq!(dr.z, vec![-1.0, -1.0]);
        assert_eq!((dr.u, dr.v), (1.0, 1.0));

        let feasible = double_reflect(&[2.0, 3.0], (0, 1), &a, &[2.0, 3.0]).unwrap();
        assert_eq!(feasible.z, vec![2.0, 3.0]);
        assert_eq!((feasible.u, feasible.v), (0.0, 0.0));

        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let same = double_reflect(&[0.5, 0.25], (1, 1), &a, &[1.0, 2.0]).unwrap();
        assert!(close(&same.z, &[0.5, 0.25], 1e-15));
        assert!((same.u + same.v).abs() < 1e-15);
    }

    #[test]
    fn relaxed_step_examples() {
        let a = DenseMatrix::identity(2).unwrap();
        let next = prdr_step(&[1.0, 1.0], (0, 1), 0.5, &a, &[0.0, 0.0]).unwrap();
        assert_eq!(next, vec![0.0, 0.0]);
        let fixed = prdr_step(&[2.0, 3.0], (0, 1), 0.5, &a, &[2.0, 3.0]).unwrap();
        assert_eq!(fixed, vec![2.0, 3.0]);
        assert!(prdr_step(&[1.0, 1.0], (0, 1), 1.0, &a, &[0.0, 0.0]).is_err());
        assert!(prdr_step(&[1.0, 1.0], (0, 1), 0.0, &a, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn momentum_step_reduces_to_relaxed_step() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [0.5, -1.0, 3.0]]).unwrap();
        let b = [1.0, -2.0];
        let x = [0.3, 0.1, -0.7];
        let xp = [0.0, 0.5, 0.2];
        let plain = prdr_step(&x, (0, 1), 0.4, &a, &b).unwrap();
        assert_eq!(mrdr_step(&x, &xp, (0, 1), 0.4, 0.0, &a, &b).unwrap(), plain);
        assert_eq!(mrdr_step(&x, &x, (0, 1), 0.4, 0.7, &a, &b).unwrap(), plain);
        assert!(mrdr_step(&x, &xp, (0, 1), 0.4, -0.1, &a, &b).is_err());
    }

    #[test]
    fn adaptive_params_fallbacks() {
        let a = DenseMatrix::identity(2).unwrap();
        let b = [0.0, 0.0];
        let x = [1.0, 1.0];
        let dr = double_reflect(&x, (0, 1), &a, &b).unwrap();
        // d = 0: guard triggers
        let p = amprdr_params(&x, &x, &dr, (0, 1), &a, &b, 1e-16).unwrap();
        assert_eq!((p.alpha, p.beta, p.guarded), (0.5, 0.0, true));
        // z == x
        let same = double_reflect(&x, (0, 0), &a, &b).unwrap();
        assert!(matches!(
            amprdr_params(&x, &[0.0, 0.0], &same, (0, 0), &a, &b, 1e-16),
            Err(Error::DegenerateStep)
        ));
    }

    #[test]
    fn orthogonal_momentum_gives_plain_midpoint() {
        // z - x = (-2, -2); d ⟂ (z - x)
        let a = DenseMatrix::identity(2).unwrap();
        let b = [0.0, 0.0];
        let x = [1.0, 1.0];
        let x_prev = [0.0, 2.0];
        let dr = double_reflect(&x, (0, 1), &a, &b).unwrap();
        let p = amprdr_params(&x, &x_prev, &dr, (0, 1), &a, &b, 1e-16).unwrap();
        assert!(!p.guarded);
        assert_eq!((p.alpha, p.beta), (0.5, 0.0));
    }
}
