//! Convergence theory: the weight matrices `M` and `N`, contraction factors
//! for RDR and both PRDR strategies, closed-form expected double-reflection
//! operators, and per-step AmPRDR diagnostics.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    dot, is_positive_definite, norm_sq, row_geometry, spectral_summary, DenseMatrix, RowGeometry,
};
use crate::solvers::double_reflect;

/// Pair-selection strategy of PRDR.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Strategy {
    /// Without replacement, row-norm weighted.
    I,
    /// 2-element volume sampling.
    II,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::I => "I",
            Strategy::II => "II",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Strategy::I),
            "II" | "2" => Ok(Strategy::II),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

const RANK_MSG: &str = "rank(A) >= 2 required";

fn require_rank2(a: &DenseMatrix) -> Result<usize> {
    let r = spectral_summary(a).numeric_rank;
    if r < 2 {
        return Err(Error::DegenerateMatrix(format!("{RANK_MSG}, got rank {r}")));
    }
    Ok(r)
}

/// `F - ‖a_j‖²` for every row; errors if any is not positive.
fn complements(g: &RowGeometry) -> Result<Vec<f64>> {
    g.row_norms_sq
        .iter()
        .enumerate()
        .map(|(j, &nj)| {
            let c = g.frob_sq - nj;
            if c > 0.0 {
                Ok(c)
            } else {
                Err(Error::DegenerateMatrix(format!(
                    "row {j} carries all of ‖A‖_F² (denominator ‖A‖_F² - ‖a_j‖² = {c:e})"
                )))
            }
        })
        .collect()
}

/// `Δ = Σ_j ‖a_j‖² / (‖A‖_F² - ‖a_j‖²)`.
pub fn delta(a: &DenseMatrix) -> Result<f64> {
    let g = row_geometry(a, false);
    delta_from(&g)
}

fn delta_from(g: &RowGeometry) -> Result<f64> {
    let c = complements(g)?;
    Ok(g.row_norms_sq.iter().zip(&c).map(|(n, c)| n / c).sum())
}

fn gram_of(a: &DenseMatrix) -> RowGeometry {
    row_geometry(a, true)
}

/// `M` entry by entry as defined, before symmetrization.
///
/// Off-diagonal `(i, j)`: `-2⟨a_i,a_j⟩ / (‖A‖_F² - ‖a_j‖²)`; diagonal
/// `Δ + 1 - ‖a_i‖² / (‖A‖_F² - ‖a_i‖²)`. With this orientation
/// `E[T_j T_i] = I - (2/‖A‖_F²) Aᵀ M A` under Strategy I.
pub fn build_m_raw(a: &DenseMatrix) -> Result<DenseMatrix> {
    let g = gram_of(a);
    build_m_raw_from(&g)
}

fn build_m_raw_from(g: &RowGeometry) -> Result<DenseMatrix> {
    let gram = g.gram.as_ref().expect("gram");
    let m = g.row_norms_sq.len();
    let c = complements(g)?;
    let delta: f64 = g.row_norms_sq.iter().zip(&c).map(|(n, c)| n / c).sum();
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            data[i * m + j] = if i == j {
                delta + 1.0 - g.row_norms_sq[i] / c[i]
            } else {
                -2.0 * gram.get(i, j) / c[j]
            };
        }
    }
    DenseMatrix::from_row_major(m, m, data)
}

/// Symmetrized `M`, `(M + Mᵀ)/2`; same quadratic form as the raw matrix.
pub fn build_m(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(build_m_raw(a)?.symmetrized())
}

/// `g_{ij} = 1 - ⟨a_i,a_j⟩² / (‖a_i‖²‖a_j‖²)`, zero when either row vanishes.
pub fn g_coefficient(gram: &DenseMatrix, i: usize, j: usize) -> f64 {
    let (ni, nj) = (gram.get(i, i), gram.get(j, j));
    if ni == 0.0 || nj == 0.0 {
        return 0.0;
    }
    let c = gram.get(i, j);
    1.0 - c * c / (ni * nj)
}

/// `N`: off-diagonal `-g_{ij}⟨a_i,a_j⟩`, diagonal `Σ_j g_{ij}‖a_j‖²`.
pub fn build_n(a: &DenseMatrix) -> Result<DenseMatrix> {
    build_n_from(&gram_of(a))
}

fn build_n_from(g: &RowGeometry) -> Result<DenseMatrix> {
    let gram = g.gram.as_ref().expect("gram");
    let m = g.row_norms_sq.len();
    let mut data = vec![0.0; m * m];
    let mut volume = 0.0;
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i == j {
                continue;
            }
            let gij = g_coefficient(gram, i, j);
            diag += gij * g.row_norms_sq[j];
            data[i * m + j] = -gij * gram.get(i, j);
            volume += gij * g.row_norms_sq[i] * g.row_norms_sq[j];
        }
        data[i * m + i] = diag;
    }
    if volume <= 0.0 {
        return Err(Error::DegenerateMatrix(format!("{RANK_MSG}: every row pair is colinear")));
    }
    DenseMatrix::from_row_major(m, m, data)
}

/// `r`-th largest eigenvalue of `Aᵀ S A` for symmetric positive definite `S`,
/// where `r = rank(A)`; this is `σ_min²(S^{1/2} A)` over the nonzero spectrum.
fn weighted_sigma_min_sq(a: &DenseMatrix, g: &RowGeometry, s: &DenseMatrix, rank: usize) -> Result<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let k = if m <= n {
        // L Lᵀ = S; Lᵀ A Aᵀ L shares its nonzero spectrum with Aᵀ S A
        let chol = s
            .to_nalgebra()
            .cholesky()
            .ok_or_else(|| Error::DegenerateMatrix("weight matrix is not positive definite".into()))?;
        let l = chol.l();
        let gram = g.gram.as_ref().expect("gram").to_nalgebra();
        l.transpose() * gram * l
    } else {
        let an = a.to_nalgebra();
        an.transpose() * s.to_nalgebra() * an
    };
    let k = (&k + k.transpose()) * 0.5;
    let mut ev: Vec<f64> = k.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev[rank - 1])
}

/// RDR bound `½ + ½(1 - 2σ_min²/‖A‖_F²)²`.
pub fn rate_rdr(a: &DenseMatrix) -> Result<f64> {
    require_rank2(a)?;
    let s = spectral_summary(a);
    let f = a.frobenius_sq();
    Ok(rdr_formula(s.sigma_min_nonzero.powi(2), f))
}

fn rdr_formula(sigma_min_sq: f64, frob_sq: f64) -> f64 {
    let t = 1.0 - 2.0 * sigma_min_sq / frob_sq;
    0.5 + 0.5 * t * t
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// PRDR bound for the given strategy:
/// I: `1 - 4α(1-α) σ_min²(M^{1/2}A) / ‖A‖_F²`;
/// II: `1 - 8α(1-α) σ_min²(N^{1/2}A) / (‖A‖_F⁴ - ‖AAᵀ‖_F²)`.
pub fn rate_prdr(a: &DenseMatrix, alpha: f64, strategy: Strategy) -> Result<f64> {
    check_alpha(alpha)?;
    let rank = require_rank2(a)?;
    let g = gram_of(a);
    match strategy {
        Strategy::I => {
            let m = build_m_raw_from(&g)?.symmetrized();
            let s = weighted_sigma_min_sq(a, &g, &m, rank)?;
            Ok(1.0 - 4.0 * alpha * (1.0 - alpha) * s / g.frob_sq)
        }
        Strategy::II => {
            let n = build_n_from(&g)?;
            let s = weighted_sigma_min_sq(a, &g, &n, rank)?;
            let denom = g.frob_sq * g.frob_sq - g.gram_frob_sq().expect("gram");
            Ok(1.0 - 8.0 * alpha * (1.0 - alpha) * s / denom)
        }
    }
}

/// Everything the theory says about one matrix at one relaxation `α`.
#[derive(Clone, Debug)]
pub struct RateReport {
    pub delta: f64,
    /// Symmetrized.
    pub m: DenseMatrix,
    pub n: DenseMatrix,
    pub m_pd: bool,
    pub n_pd: bool,
    pub rank: usize,
    pub sigma_min_sq: f64,
    pub sigma_min_sq_m_half_a: f64,
    pub sigma_min_sq_n_half_a: f64,
    pub frob_sq: f64,
    /// `‖A‖_F⁴ - ‖AAᵀ‖_F²`
    pub frob4_minus_gram_frob_sq: f64,
    pub alpha: f64,
    pub rho_rdr: f64,
    pub rho_prdr1: f64,
    pub rho_prdr2: f64,
}

/// Serialized form of [`RateReport`].
#[derive(Clone, Debug, Serialize)]
pub struct RateSummary {
    pub delta: f64,
    #[serde(rename = "M_pd")]
    pub m_pd: bool,
    #[serde(rename = "N_pd")]
    pub n_pd: bool,
    pub rho_rdr: f64,
    pub rho_prdr1: f64,
    pub rho_prdr2: f64,
    pub alpha: f64,
}

impl RateReport {
    pub fn compute(a: &DenseMatrix, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let rank = require_rank2(a)?;
        let spec = spectral_summary(a);
        let g = gram_of(a);
        let delta = delta_from(&g)?;
        let m = build_m_raw_from(&g)?.symmetrized();
        let n = build_n_from(&g)?;
        let m_pd = is_positive_definite(&m)?;
        let n_pd = is_positive_definite(&n)?;
        if !m_pd || !n_pd {
            return Err(Error::DegenerateMatrix(format!(
                "weight matrices not numerically positive definite (M: {m_pd}, N: {n_pd})"
            )));
        }
        let sm = weighted_sigma_min_sq(a, &g, &m, rank)?;
        let sn = weighted_sigma_min_sq(a, &g, &n, rank)?;
        let frob_sq = g.frob_sq;
        let vol = frob_sq * frob_sq - g.gram_frob_sq().expect("gram");
        let c = alpha * (1.0 - alpha);
        let sigma_min_sq = spec.sigma_min_nonzero.powi(2);
        Ok(Self {
            delta,
            m,
            n,
            m_pd,
            n_pd,
            rank,
            sigma_min_sq,
            sigma_min_sq_m_half_a: sm,
            sigma_min_sq_n_half_a: sn,
            frob_sq,
            frob4_minus_gram_frob_sq: vol,
            alpha,
            rho_rdr: rdr_formula(sigma_min_sq, frob_sq),
            rho_prdr1: 1.0 - 4.0 * c * sm / frob_sq,
            rho_prdr2: 1.0 - 8.0 * c * sn / vol,
        })
    }

    pub fn summary(&self) -> RateSummary {
        RateSummary {
            delta: self.delta,
            m_pd: self.m_pd,
            n_pd: self.n_pd,
            rho_rdr: self.rho_rdr,
            rho_prdr1: self.rho_prdr1,
            rho_prdr2: self.rho_prdr2,
            alpha: self.alpha,
        }
    }
}

/// Closed-form `E[T_{i2} T_{i1}]`, the expected linear part of one double
/// reflection `x ↦ (I - 2P_{i2})(I - 2P_{i1}) x` under the strategy's law.
///
/// I: `I - (2/‖A‖_F²) Aᵀ M A` with the raw (unsymmetrized) `M`.
/// II: `I - 4/(‖A‖_F⁴ - ‖AAᵀ‖_F²) Aᵀ N A`.
pub fn expected_double_reflection(a: &DenseMatrix, strategy: Strategy) -> Result<DenseMatrix> {
    require_rank2(a)?;
    let g = gram_of(a);
    let (w, scale) = match strategy {
        Strategy::I => (build_m_raw_from(&g)?, 2.0 / g.frob_sq),
        Strategy::II => {
            let vol = g.frob_sq * g.frob_sq - g.gram_frob_sq().expect("gram");
            (build_n_from(&g)?, 4.0 / vol)
        }
    };
    let an = a.to_nalgebra();
    let e = DMatrix::identity(a.ncols(), a.ncols()) - (an.transpose() * w.to_nalgebra() * an) * scale;
    DenseMatrix::from_nalgebra(&e)
}

/// Per-step quantities of the adaptive-momentum analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// `cos²θ` between `x̃ - x*` and `ζ`.
    pub cos2_theta: f64,
    /// `‖d‖²‖z-x‖² - ⟨z-x,d⟩²` with `d = x - x_prev`.
    pub gram_det: f64,
}

/// `ζ = ⟨z-x, d⟩(z-x) - ‖z-x‖² d` and `cos²θ = ⟨x̃-x*, ζ⟩² / (‖x̃-x*‖²‖ζ‖²)`
/// with `x̃ = (x + z)/2`. The projection of `x*` onto `x + span{z-x, d}`
/// lies at squared distance `cos²θ ‖x̃-x*‖²` from `x̃`.
pub fn step_diagnostics(x_prev: &[f64], x: &[f64], z: &[f64], x_star: &[f64]) -> Result<StepDiagnostics> {
    let n = x.len();
    if x_prev.len() != n || z.len() != n || x_star.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: [x_prev.len(), z.len(), x_star.len()].into_iter().find(|&l| l != n).unwrap_or(n),
        });
    }
    let p: Vec<f64> = z.iter().zip(x).map(|(z, x)| z - x).collect();
    let d: Vec<f64> = x.iter().zip(x_prev).map(|(x, xp)| x - xp).collect();
    let (pp, dd, pd) = (norm_sq(&p), norm_sq(&d), dot(&p, &d));
    let gram_det = (pp * dd - pd * pd).max(0.0);
    let zeta: Vec<f64> = p.iter().zip(&d).map(|(p, d)| pd * p - pp * d).collect();
    let zz = norm_sq(&zeta);
    if zz == 0.0 || gram_det <= 0.0 {
        return Err(Error::DegenerateStep);
    }
    let e: Vec<f64> = x.iter().zip(z).zip(x_star).map(|((x, z), s)| 0.5 * (x + z) - s).collect();
    let ee = norm_sq(&e);
    let cos2_theta = if ee == 0.0 {
        0.0
    } else {
        let c = dot(&e, &zeta);
        c * c / (ee * zz)
    };
    Ok(StepDiagnostics { cos2_theta, gram_det })
}

/// Largest row count accepted by [`gamma_enumerate`].
pub const GAMMA_MAX_ROWS: usize = 15;

/// `inf cos²θ` over every ordered pair whose double reflection moves `x`,
/// evaluated at the iterate pair `(x_prev, x)`. Pairs whose momentum and
/// reflection directions are parallel contribute 0. `None` when no pair
/// moves `x` (then `x` solves the system).
pub fn gamma_enumerate(
    a: &DenseMatrix,
    b: &[f64],
    x_prev: &[f64],
    x: &[f64],
    x_star: &[f64],
    zero_tol: f64,
) -> Result<Option<f64>> {
    let m = a.nrows();
    if m > GAMMA_MAX_ROWS {
        return Err(Error::BadShape(format!(
            "pair enumeration limited to {GAMMA_MAX_ROWS} rows, got {m}"
        )));
    }
    let norms: Vec<f64> = a.rows_iter().map(norm_sq).collect();
    let mut best: Option<f64> = None;
    for i in 0..m {
        for j in 0..m {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let dr = double_reflect(x, (i, j), a, b)?;
            let moved = dr.z.iter().zip(x).map(|(z, x)| (z - x) * (z - x)).sum::<f64>().sqrt();
            if moved <= zero_tol {
                continue;
            }
            let c = match step_diagnostics(x_prev, x, &dr.z, x_star) {
                Ok(d) => d.cos2_theta,
                Err(Error::DegenerateStep) => 0.0,
                Err(e) => return Err(e),
            };
            best = Some(best.map_or(c, |b| b.min(c)));
        }
    }
    Ok(best)
}
