//! Dense real linear algebra shared by the solvers, samplers and rate
//! computations.
//!
//! Storage is row-major because every method here is row-action: the hot
//! loops touch one or two rows of `A` per iteration. Factorizations (SVD,
//! symmetric eigendecomposition, Cholesky) are delegated to `nalgebra`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`is_positive_definite`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Pivot threshold, relative to the largest diagonal entry.
pub const PD_TOL: f64 = 1e-12;
/// Relative residual accepted when verifying that a system is consistent.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

/// `y += s * x`
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Squared Euclidean distance without allocating.
#[inline]
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Row-major `m x n` real matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::BadShape(format!("{rows}x{cols} matrix has no entries")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(m, n, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_row_major(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut a = Self::zeros(n, n)?;
        for i in 0..n {
            a.data[i * n + i] = 1.0;
        }
        Ok(a)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut a = Self::zeros(n, n)?;
        for (i, v) in values.iter().enumerate() {
            a.data[i * n + i] = *v;
        }
        Ok(a)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        self.rows_iter().map(|r| dot(r, x)).collect()
    }

    /// `Aᵀ y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_t dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, yi) in self.rows_iter().zip(y) {
            axpy(*yi, r, &mut out);
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        norm_sq(&self.data)
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    /// `(S + Sᵀ) / 2` for a square matrix.
    pub fn symmetrized(&self) -> DenseMatrix {
        assert_eq!(self.rows, self.cols, "symmetrized needs a square matrix");
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
            }
        }
        out
    }

    /// Row-normalized copy; zero rows stay zero.
    pub fn row_normalized(&self) -> DenseMatrix {
        let mut out = self.clone();
        for r in out.data.chunks_exact_mut(self.cols) {
            let s = norm(r);
            if s > 0.0 {
                r.iter_mut().for_each(|v| *v /= s);
            }
        }
        out
    }
}

/// Cached row quantities: squared row norms, `‖A‖_F²` and optionally the
/// Gram matrix `A Aᵀ`.
#[derive(Clone, Debug)]
pub struct RowGeometry {
    pub row_norms_sq: Vec<f64>,
    pub frob_sq: f64,
    pub gram: Option<DenseMatrix>,
}

impl RowGeometry {
    /// `‖A Aᵀ‖_F²`; requires the Gram matrix.
    pub fn gram_frob_sq(&self) -> Option<f64> {
        self.gram.as_ref().map(|g| g.frobenius_sq())
    }

    pub fn nonzero_rows(&self) -> usize {
        self.row_norms_sq.iter().filter(|&&w| w > 0.0).count()
    }
}

pub fn row_geometry(a: &DenseMatrix, with_gram: bool) -> RowGeometry {
    let row_norms_sq: Vec<f64> = a.rows_iter().map(norm_sq).collect();
    let frob_sq = row_norms_sq.iter().sum();
    let gram = with_gram.then(|| {
        let m = a.nrows();
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            g[i * m + i] = row_norms_sq[i];
            for j in (i + 1)..m {
                let v = dot(a.row(i), a.row(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        DenseMatrix { rows: m, cols: m, data: g }
    });
    RowGeometry {
        row_norms_sq,
        frob_sq,
        gram,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralSummary {
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    pub numeric_rank: usize,
    /// Smallest singular value above the rank cutoff; 0 for the zero matrix.
    pub sigma_min_nonzero: f64,
}

impl SpectralSummary {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn condition_number(&self) -> f64 {
        if self.numeric_rank == 0 {
            f64::INFINITY
        } else {
            self.sigma_max() / self.sigma_min_nonzero
        }
    }
}

/// Singular values at or below `max(m, n) * σ₁ * ε` count as zero.
pub fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

pub fn spectral_summary(b: &DenseMatrix) -> SpectralSummary {
    let mut sv: Vec<f64> = b.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let cutoff = rank_cutoff(b.nrows(), b.ncols(), sv[0]);
    let numeric_rank = sv.iter().take_while(|&&s| s > cutoff).count();
    let sigma_min_nonzero = if numeric_rank == 0 { 0.0 } else { sv[numeric_rank - 1] };
    SpectralSummary {
        singular_values: sv,
        numeric_rank,
        sigma_min_nonzero,
    }
}

/// Truncated SVD factors of `A`, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    /// `m x r`, column-major in nalgebra.
    u: DMatrix<f64>,
    /// `n x r`.
    v: DMatrix<f64>,
    sigma: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl PseudoInverse {
    pub fn new(a: &DenseMatrix) -> Self {
        let svd = a.to_nalgebra().svd(true, true);
        let u_full = svd.u.expect("u requested");
        let vt_full = svd.v_t.expect("v_t requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let smax = order.first().map_or(0.0, |&k| svd.singular_values[k]);
        let cutoff = rank_cutoff(a.nrows(), a.ncols(), smax);
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&k| svd.singular_values[k] > cutoff)
            .collect();
        let r = keep.len();
        let mut u = DMatrix::zeros(a.nrows(), r);
        let mut v = DMatrix::zeros(a.ncols(), r);
        let mut sigma = Vec::with_capacity(r);
        for (c, &k) in keep.iter().enumerate() {
            u.set_column(c, &u_full.column(k));
            v.set_column(c, &vt_full.row(k).transpose());
            sigma.push(svd.singular_values[k]);
        }
        Self {
            u,
            v,
            sigma,
            rows: a.nrows(),
            cols: a.ncols(),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// `A† y`
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (c, s) in self.sigma.iter().enumerate() {
            let coef = self.u.column(c).iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / s;
            for (o, vi) in out.iter_mut().zip(self.v.column(c).iter()) {
                *o += coef * vi;
            }
        }
        out
    }

    /// Orthonormal basis of `Range(Aᵀ)`, one vector per retained singular value.
    pub fn row_space_basis(&self) -> Vec<Vec<f64>> {
        (0..self.rank())
            .map(|c| self.v.column(c).iter().copied().collect())
            .collect()
    }

    /// Removes the `Range(Aᵀ)` component of `x`, leaving its null-space part.
    pub fn null_space_component(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for c in 0..self.rank() {
            let col = self.v.column(c);
            let coef: f64 = col.iter().zip(x).map(|(a, b)| a * b).sum();
            for (o, vi) in out.iter_mut().zip(col.iter()) {
                *o -= coef * vi;
            }
        }
        out
    }

    /// `x0 + A†(b - A x0)`: the projection of `x0` onto `{x : Ax = b}`.
    pub fn project_onto_solutions(&self, a: &DenseMatrix, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        check_len(b.len(), a.nrows())?;
        check_len(x0.len(), a.ncols())?;
        let resid = sub(b, &a.matvec(x0));
        let mut x = self.apply(&resid);
        axpy(1.0, x0, &mut x);
        verify_consistent(a, b, &x)?;
        Ok(x)
    }
}

fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Fails with `InconsistentSystem` if `‖A x - b‖ > tol_consist * max(1, ‖b‖)`.
pub fn verify_consistent(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<()> {
    let residual = norm(&sub(&a.matvec(x), b));
    let tolerance = CONSISTENCY_TOL * norm(b).max(1.0);
    if residual > tolerance {
        return Err(Error::InconsistentSystem { residual, tolerance });
    }
    Ok(())
}

/// Minimum-norm solution `A† b` of a consistent system.
pub fn min_norm_solution(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_len(b.len(), a.nrows())?;
    let x = PseudoInverse::new(a).apply(b);
    verify_consistent(a, b, &x)?;
    Ok(x)
}

/// Orthogonal projection of `x0` onto the solution set of `A x = b`.
pub fn reference_solution(a: &DenseMatrix, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    PseudoInverse::new(a).project_onto_solutions(a, b, x0)
}

/// Positive-definiteness via diagonally pivoted Cholesky: every pivot must
/// exceed `PD_TOL` times the largest diagonal entry.
pub fn is_positive_definite(s: &DenseMatrix) -> Result<bool> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::BadShape(format!("{}x{} is not square", n, s.ncols())));
    }
    let scale = s.max_abs();
    let asym = s.max_abs_diff(&s.transpose());
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric {
            asymmetry: if scale > 0.0 { asym / scale } else { asym },
        });
    }
    let mut w = s.symmetrized().data;
    let max_diag = (0..n).map(|i| w[i * n + i]).fold(f64::NEG_INFINITY, f64::max);
    if max_diag <= 0.0 {
        return Ok(false);
    }
    let threshold = PD_TOL * max_diag;
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // choose the largest remaining diagonal as pivot
        let (p, pivot) = (k..n)
            .map(|i| (i, w[perm[i] * n + perm[i]]))
            .fold((k, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        if pivot <= threshold {
            return Ok(false);
        }
        perm.swap(k, p);
        let pk = perm[k];
        let l_kk = pivot.sqrt();
        for &pi in &perm[(k + 1)..] {
            w[pi * n + pk] /= l_kk;
        }
        for a in (k + 1)..n {
            let pa = perm[a];
            let l_a = w[pa * n + pk];
            for &pb in &perm[(k + 1)..=a] {
                let l_b = w[pb * n + pk];
                w[pa * n + pb] -= l_a * l_b;
                w[pb * n + pa] = w[pa * n + pb];
            }
        }
    }
    Ok(true)
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn symmetric_eigenvalues(s: &DenseMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = s
        .symmetrized()
        .to_nalgebra()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}
