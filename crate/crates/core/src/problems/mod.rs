//! Test-problem construction: synthetic generators with controlled spectra
//! or coherence, consistent right-hand sides, and Matrix Market files.

mod mtx;

pub use mtx::{parse_matrix_market, read_matrix_market, write_matrix_market, write_matrix_market_to, MatrixMarketHeader};

use std::fmt;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, PseudoInverse};
use crate::sampling::SeededRng;

/// Stream used for data generation so it never overlaps solver draws of
/// the same seed.
pub const DATA_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Spectral {
        m: usize,
        n: usize,
        r: usize,
        sigma1: f64,
        delta: f64,
        seed: u64,
    },
    Uniform {
        m: usize,
        n: usize,
        t: f64,
        seed: u64,
    },
    File {
        path: PathBuf,
    },
    Manual,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Spectral { m, n, r, sigma1, delta, seed } => {
                write!(f, "spectral(m={m}, n={n}, r={r}, sigma1={sigma1}, delta={delta}, seed={seed})")
            }
            Provenance::Uniform { m, n, t, seed } => write!(f, "uniform(m={m}, n={n}, t={t}, seed={seed})"),
            Provenance::File { path } => write!(f, "file({})", path.display()),
            Provenance::Manual => f.write_str("manual"),
        }
    }
}

/// A consistent system `A x = b`, optionally with the generating solution.
#[derive(Clone, Debug)]
pub struct LinearProblem {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    /// Generator solution; `A x_star = b` when present.
    pub x_star: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl LinearProblem {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                actual: b.len(),
            });
        }
        Ok(Self {
            a,
            b,
            x_star: None,
            provenance: Provenance::Manual,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// `A†b + (I - A†A) x0`, the point the solvers converge to from `x0`.
    pub fn reference_solution(&self, x0: &[f64]) -> Result<Vec<f64>> {
        PseudoInverse::new(&self.a).project_onto_solutions(&self.a, &self.b, x0)
    }
}

/// Column-orthonormal factors and singular values of a generated matrix.
#[derive(Clone, Debug)]
pub struct SpectralFactors {
    /// `m x r`
    pub u: DenseMatrix,
    /// `n x r`
    pub v: DenseMatrix,
    pub singular_values: Vec<f64>,
}

fn gaussian_orthonormal(rows: usize, cols: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    // filled column by column, like randn(rows, cols)
    let mut g = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            g[(i, j)] = rng.standard_normal();
        }
    }
    // thin Householder QR: Q is rows x cols
    g.qr().q()
}

/// `A = U D Vᵀ` with `D = diag(σ₁, δ, …, δ)` of size `r` and `U`, `V`
/// orthonormalized standard-normal matrices.
pub fn gen_spectral_factors(
    m: usize,
    n: usize,
    r: usize,
    sigma1: f64,
    delta: f64,
    seed: u64,
) -> Result<(DenseMatrix, SpectralFactors)> {
    if m == 0 || n == 0 || r < 2 || r > m.min(n) {
        return Err(Error::BadShape(format!(
            "need 2 <= r <= min(m, n), got m={m}, n={n}, r={r}"
        )));
    }
    if !(delta > 0.0 && sigma1 >= delta && sigma1.is_finite()) {
        return Err(Error::BadShape(format!(
            "need sigma1 >= delta > 0, got sigma1={sigma1}, delta={delta}"
        )));
    }
    let mut rng = SeededRng::with_stream(seed, DATA_STREAM);
    let u = gaussian_orthonormal(m, r, &mut rng);
    let v = gaussian_orthonormal(n, r, &mut rng);
    let mut d = vec![delta; r];
    d[0] = sigma1;
    let mut ud = u.clone();
    for (j, s) in d.iter().enumerate() {
        ud.column_mut(j).scale_mut(*s);
    }
    let a = &ud * v.transpose();
    Ok((
        DenseMatrix::from_nalgebra(&a)?,
        SpectralFactors {
            u: DenseMatrix::from_nalgebra(&u)?,
            v: DenseMatrix::from_nalgebra(&v)?,
            singular_values: d,
        },
    ))
}

pub fn gen_spectral(m: usize, n: usize, r: usize, sigma1: f64, delta: f64, seed: u64) -> Result<DenseMatrix> {
    gen_spectral_factors(m, n, r, sigma1, delta, seed).map(|(a, _)| a)
}

/// Entries i.i.d. uniform on `[t, 1]`.
pub fn gen_uniform(m: usize, n: usize, t: f64, seed: u64) -> Result<DenseMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::BadShape(format!("{m}x{n} matrix has no entries")));
    }
    if !(0.0..1.0).contains(&t) {
        return Err(Error::BadShape(format!("need 0 <= t < 1, got t={t}")));
    }
    let mut rng = SeededRng::with_stream(seed, DATA_STREAM);
    let data = (0..m * n).map(|_| t + (1.0 - t) * rng.uniform()).collect();
    DenseMatrix::from_row_major(m, n, data)
}

/// Standard-normal `x*` of length `n` drawn from its own stream, separate
/// from the matrix generators'.
pub fn draw_solution(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::with_stream(seed, DATA_STREAM + 1);
    (0..n).map(|_| rng.standard_normal()).collect()
}

/// Draws `x* ~ N(0, I)` and sets `b = A x*`.
pub fn make_consistent(a: DenseMatrix, seed: u64) -> LinearProblem {
    let x_star = draw_solution(a.ncols(), seed);
    let b = a.matvec(&x_star);
    LinearProblem {
        a,
        b,
        x_star: Some(x_star),
        provenance: Provenance::Manual,
    }
}
