//! Iterative solvers: randomized Kaczmarz, randomized Douglas-Rachford and
//! its relaxed, momentum and adaptive-momentum variants.
//!
//! One iteration of every Douglas-Rachford method performs one double
//! reflection (two row operations); one RK iteration performs a single
//! projection.

mod ops;

pub use ops::{
    amprdr_params, apply_params, double_reflect, mrdr_step, prdr_step, project_hyperplane,
    reflect_hyperplane, DoubleReflection, StepParams, DENOM_GUARD, FALLBACK_ALPHA,
};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, norm, norm_sq, DenseMatrix};
use crate::problems::LinearProblem;
use crate::sampling::{PairSampler, SamplerKind, SeededRng};
use ops::{adaptive_params, reflection_coefficients, AdaptiveInputs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    /// Randomized Kaczmarz baseline.
    Rk,
    Rdr,
    PrdrI,
    PrdrII,
    Mrdr,
    AmprdrI,
    AmprdrII,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Rk,
        Method::Rdr,
        Method::PrdrI,
        Method::PrdrII,
        Method::Mrdr,
        Method::AmprdrI,
        Method::AmprdrII,
    ];

    /// The six Douglas-Rachford methods compared in the benchmark grids.
    pub const DR_FAMILY: [Method; 6] = [
        Method::Rdr,
        Method::Mrdr,
        Method::PrdrI,
        Method::PrdrII,
        Method::AmprdrI,
        Method::AmprdrII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rk => "RK",
            Method::Rdr => "RDR",
            Method::PrdrI => "PRDR-I",
            Method::PrdrII => "PRDR-II",
            Method::Mrdr => "mRDR",
            Method::AmprdrI => "AmPRDR-I",
            Method::AmprdrII => "AmPRDR-II",
        }
    }

    pub fn sampler_kind(self) -> SamplerKind {
        match self {
            Method::Rk | Method::Rdr | Method::Mrdr => SamplerKind::Iid,
            Method::PrdrI | Method::AmprdrI => SamplerKind::WithoutReplacement,
            Method::PrdrII | Method::AmprdrII => SamplerKind::Volume,
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::AmprdrI | Method::AmprdrII)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "rk" => Method::Rk,
            "rdr" => Method::Rdr,
            "prdri" | "prdr1" => Method::PrdrI,
            "prdrii" | "prdr2" => Method::PrdrII,
            "mrdr" => Method::Mrdr,
            "amprdri" | "amprdr1" => Method::AmprdrI,
            "amprdrii" | "amprdr2" => Method::AmprdrII,
            _ => return Err(Error::Config(format!("unknown method '{s}'"))),
        })
    }
}

/// What the convergence metric measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Metric {
    /// `‖x - x_ref‖² / ‖x_ref‖²`
    Rse,
    /// `‖A x - b‖ / ‖b‖`, used when no reference solution is available.
    RelativeResidual,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub method: Method,
    pub alpha: f64,
    /// Only used by mRDR.
    pub beta: f64,
    pub rse_tol: f64,
    pub max_iters: usize,
    /// `‖z - x‖₂` at or below this counts as a trivial reflection.
    pub zero_tol: f64,
    pub seed: u64,
    /// Trace every `trace_stride` iterations; 0 records only start and end.
    pub trace_stride: usize,
    /// Initial point; zero when `None`.
    pub x0: Option<Vec<f64>>,
    /// Wall-clock seconds in the trace; zeros when false.
    pub record_time: bool,
    /// Added to every trace timestamp (e.g. sampler preprocessing).
    pub time_offset: f64,
}

impl SolveOptions {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            alpha: 0.5,
            beta: 0.0,
            rse_tol: 1e-12,
            max_iters: 10_000_000,
            zero_tol: 1e-16,
            seed: 0,
            trace_stride: 10,
            x0: None,
            record_time: true,
            time_offset: 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_trace_stride(mut self, stride: usize) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn with_rse_tol(mut self, tol: f64) -> Self {
        self.rse_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rse_tol > 0.0) {
            return Err(Error::Config("rse_tol must be positive".into()));
        }
        if !(self.zero_tol >= 0.0) {
            return Err(Error::Config("zero_tol must be nonnegative".into()));
        }
        let needs_alpha = !matches!(self.method, Method::Rk) && !self.method.is_adaptive();
        if needs_alpha && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.method == Method::Mrdr && !(self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be nonnegative, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// RSE, or relative residual under [`Metric::RelativeResidual`].
    pub rse: f64,
    pub seconds: f64,
}

/// Iterates, counter, random source and trace of one run.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x_curr: Vec<f64>,
    /// Previous iterate; equal to `x_curr` before the first step.
    pub x_prev: Vec<f64>,
    pub iteration: usize,
    pub rng: SeededRng,
    pub trace: Vec<TracePoint>,
}

impl SolverState {
    pub fn new(x0: Vec<f64>, rng: SeededRng) -> Self {
        Self {
            x_prev: x0.clone(),
            x_curr: x0,
            iteration: 0,
            rng,
            trace: Vec::new(),
        }
    }
}

/// What one call to [`Stepper::step`] did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub pair: (usize, usize),
    pub alpha: f64,
    pub beta: f64,
    pub guarded: bool,
    /// Degenerate pairs discarded before this step.
    pub resampled: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Advanced(StepInfo),
    /// Every sampled pair left the iterate fixed and the residual check
    /// confirmed it solves the system.
    Converged,
}

/// Drives one method one iteration at a time.
pub struct Stepper<'a> {
    a: &'a DenseMatrix,
    b: &'a [f64],
    sampler: &'a PairSampler,
    opts: SolveOptions,
    pub state: SolverState,
    /// `w` of the last double reflection: `z = x_prev - 2w` after a step.
    /// Stale while `lazy_w` holds the coefficients it would be built from.
    w: Vec<f64>,
    lazy_w: Option<((usize, usize), f64, f64)>,
    resample_limit: usize,
    residual_tol: f64,
    guard_triggers: usize,
    resamples: usize,
    reference: Option<Vec<f64>>,
    err_sq: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(a: &'a DenseMatrix, b: &'a [f64], sampler: &'a PairSampler, opts: SolveOptions) -> Result<Self> {
        opts.validate()?;
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                actual: b.len(),
            });
        }
        if sampler.kind() != opts.method.sampler_kind() || sampler.num_rows() != a.nrows() {
            return Err(Error::Config(format!(
                "{} needs a {} sampler over {} rows",
                opts.method,
                opts.method.sampler_kind(),
                a.nrows()
            )));
        }
        let x0 = match &opts.x0 {
            Some(x0) if x0.len() != a.ncols() => {
                return Err(Error::DimensionMismatch {
                    expected: a.ncols(),
                    actual: x0.len(),
                })
            }
            Some(x0) => x0.clone(),
            None => vec![0.0; a.ncols()],
        };
        let rng = SeededRng::new(opts.seed);
        let residual_tol = opts.rse_tol.sqrt() * norm(b).max(1.0);
        Ok(Self {
            a,
            b,
            sampler,
            state: SolverState::new(x0, rng),
            w: vec![0.0; a.ncols()],
            resample_limit: 100 * a.nrows(),
            residual_tol,
            guard_triggers: 0,
            resamples: 0,
            reference: None,
            err_sq: 0.0,
            lazy_w: None,
            opts,
        })
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    pub fn guard_triggers(&self) -> usize {
        self.guard_triggers
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    fn last_w(&self) -> Vec<f64> {
        match self.lazy_w {
            Some(((i1, i2), u, v)) => self
                .a
                .row(i1)
                .iter()
                .zip(self.a.row(i2))
                .map(|(p, q)| u * p + v * q)
                .collect(),
            None => self.w.clone(),
        }
    }

    /// `z` of the most recent double reflection (taken from the previous
    /// iterate). For RK this is the reflection through the sampled row.
    pub fn last_reflection(&self) -> Vec<f64> {
        self.state
            .x_prev
            .iter()
            .zip(self.last_w())
            .map(|(x, w)| x - 2.0 * w)
            .collect()
    }

    /// `z - x` of the most recent step, formed without cancellation against `x`.
    pub fn last_step(&self) -> Vec<f64> {
        self.last_w().into_iter().map(|w| -2.0 * w).collect()
    }

    /// `x̃ = (x_prev + z) / 2` of the most recent step.
    pub fn last_midpoint(&self) -> Vec<f64> {
        self.state.x_prev.iter().zip(self.last_w()).map(|(x, w)| x - w).collect()
    }

    pub fn residual_norm(&self) -> f64 {
        let x = &self.state.x_curr;
        self.a
            .rows_iter()
            .zip(self.b)
            .map(|(r, bi)| {
                let t = dot(r, x) - bi;
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `(u, v, r1, r2)` of the double reflection through `pair` at the
    /// current iterate.
    #[inline]
    fn coefficients(&self, pair: (usize, usize)) -> (f64, f64, f64, f64) {
        let (i1, i2) = pair;
        let g = self.sampler.geometry();
        reflection_coefficients(
            &self.state.x_curr,
            self.a.row(i1),
            self.a.row(i2),
            self.b[i1],
            self.b[i2],
            g.row_norms_sq[i1],
            g.row_norms_sq[i2],
        )
    }

    /// Builds `w = u a_{i1} + v a_{i2}` and returns `(‖w‖², ⟨w,d⟩, ‖d‖²)`
    /// with `d = x - x_prev`.
    #[inline]
    fn build_w(&mut self, pair: (usize, usize), u: f64, v: f64) -> (f64, f64, f64) {
        let (a1, a2) = (self.a.row(pair.0), self.a.row(pair.1));
        let s = &self.state;
        let (mut w_sq, mut w_dot_d, mut d_sq) = ([0.0f64; 4], [0.0f64; 4], [0.0f64; 4]);
        let n = self.w.len();
        let split = n - n % 4;
        let (head, tail) = self.w.split_at_mut(split);
        let lanes = head
            .chunks_exact_mut(4)
            .zip(a1.chunks_exact(4))
            .zip(a2.chunks_exact(4))
            .zip(s.x_curr.chunks_exact(4))
            .zip(s.x_prev.chunks_exact(4));
        for ((((w, p), q), x), xp) in lanes {
            for l in 0..4 {
                let wi = u * p[l] + v * q[l];
                let d = x[l] - xp[l];
                w[l] = wi;
                w_sq[l] += wi * wi;
                w_dot_d[l] += wi * d;
                d_sq[l] += d * d;
            }
        }
        let rest = tail.iter_mut().zip(&a1[split..]).zip(&a2[split..]).zip(&s.x_curr[split..]).zip(&s.x_prev[split..]);
        for ((((w, p), q), x), xp) in rest {
            let wi = u * p + v * q;
            let d = x - xp;
            *w = wi;
            w_sq[0] += wi * wi;
            w_dot_d[0] += wi * d;
            d_sq[0] += d * d;
        }
        let sum = |a: [f64; 4]| (a[0] + a[1]) + (a[2] + a[3]);
        let (w_sq, w_dot_d, d_sq) = (sum(w_sq), sum(w_dot_d), sum(d_sq));
        (w_sq, w_dot_d, d_sq)
    }

    /// `x_new = x - 2α w + β (x - x_prev)`, rotating the iterate buffers.
    /// With `rows = Some((pair, u, v))` the rows are combined on the fly and
    /// the scratch `w` is left stale; otherwise the stored `w` is used.
    #[inline]
    fn commit(&mut self, alpha: f64, beta: f64, rows: Option<((usize, usize), f64, f64)>) {
        let s = &mut self.state;
        let two_alpha = 2.0 * alpha;
        let err = match rows {
            Some(((i1, i2), u, v)) => {
                let (a1, a2) = (self.a.row(i1), self.a.row(i2));
                update_rows(&mut s.x_prev, &s.x_curr, a1, a2, -two_alpha * u, -two_alpha * v, beta, self.reference.as_deref())
            }
            None => update_rows(&mut s.x_prev, &s.x_curr, &self.w, &self.w, -two_alpha, 0.0, beta, self.reference.as_deref()),
        };
        std::mem::swap(&mut s.x_prev, &mut s.x_curr);
        s.iteration += 1;
        self.lazy_w = rows;
        if self.reference.is_some() {
            self.err_sq = err;
        }
    }

    /// Samples until the reflection moves the iterate, or decides the iterate
    /// is already a solution. On success `w` holds the reflection and the
    /// return carries `(pair, u, v, r1, r2, attempts, ‖w‖², ⟨w,d⟩, ‖d‖²)`.
    #[allow(clippy::type_complexity)]
    fn sample_nontrivial(&mut self) -> Result<Option<((usize, usize), f64, f64, f64, f64, usize, f64, f64, f64)>> {
        let mut attempts = 0;
        loop {
            let pair = self.sampler.sample_pair(&mut self.state.rng);
            let (u, v, r1, r2) = self.coefficients(pair);
            let (w_sq, w_dot_d, d_sq) = self.build_w(pair, u, v);
            // ‖z - x‖ = 2‖w‖
            if 2.0 * w_sq.sqrt() > self.opts.zero_tol {
                self.resamples += attempts;
                return Ok(Some((pair, u, v, r1, r2, attempts, w_sq, w_dot_d, d_sq)));
            }
            attempts += 1;
            if attempts >= self.resample_limit {
                self.resamples += attempts;
                let residual = self.residual_norm();
                if residual <= self.residual_tol {
                    self.w.iter_mut().for_each(|w| *w = 0.0);
                    self.lazy_w = None;
                    return Ok(None);
                }
                return Err(Error::StalledAtNonSolution { attempts, residual });
            }
        }
    }

    /// Tracks `‖x - r‖²` during updates, readable through [`Self::error_sq`].
    pub fn track_reference(&mut self, r: &[f64]) -> Result<()> {
        if r.len() != self.a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.a.ncols(),
                actual: r.len(),
            });
        }
        self.err_sq = dist_sq(&self.state.x_curr, r);
        self.reference = Some(r.to_vec());
        Ok(())
    }

    /// `‖x - r‖²` for the tracked reference.
    pub fn error_sq(&self) -> Option<f64> {
        self.reference.as_ref().map(|_| self.err_sq)
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let method = self.opts.method;
        match method {
            Method::Rk => {
                let i = self.sampler.sample_row(&mut self.state.rng);
                let a = self.a.row(i);
                let c = (dot(a, &self.state.x_curr) - self.b[i]) / self.sampler.geometry().row_norms_sq[i];
                // projection = reflection with α = 1/2
                self.commit(0.5, 0.0, Some(((i, i), c, 0.0)));
                Ok(StepOutcome::Advanced(StepInfo {
                    pair: (i, i),
                    alpha: 1.0,
                    beta: 0.0,
                    guarded: false,
                    resampled: 0,
                }))
            }
            Method::Rdr | Method::PrdrI | Method::PrdrII | Method::Mrdr => {
                let pair = self.sampler.sample_pair(&mut self.state.rng);
                let (u, v, _, _) = self.coefficients(pair);
                let beta = if method == Method::Mrdr { self.opts.beta } else { 0.0 };
                self.commit(self.opts.alpha, beta, Some((pair, u, v)));
                Ok(StepOutcome::Advanced(StepInfo {
                    pair,
                    alpha: self.opts.alpha,
                    beta,
                    guarded: false,
                    resampled: 0,
                }))
            }
            Method::AmprdrI | Method::AmprdrII => {
                let Some((pair, u, v, r1, r2, resampled, w_sq, w_dot_d, d_sq)) = self.sample_nontrivial()? else {
                    return Ok(StepOutcome::Converged);
                };
                let (alpha, beta, guarded) = if self.state.iteration == 0 {
                    (0.5, 0.0, false)
                } else {
                    adaptive_params(AdaptiveInputs {
                        d_sq,
                        w_sq,
                        w_dot_d,
                        w_residual: u * r1 + v * r2,
                    })
                };
                if guarded {
                    self.guard_triggers += 1;
                }
                self.commit(alpha, beta, None);
                Ok(StepOutcome::Advanced(StepInfo {
                    pair,
                    alpha,
                    beta,
                    guarded,
                    resampled,
                }))
            }
        }
    }
}

/// `prev <- x + c1 p + c2 q + β (x - prev)`, returning `‖prev - r‖²` when a
/// reference is given (0 otherwise).
#[allow(clippy::too_many_arguments)]
#[inline]
fn update_rows(prev: &mut [f64], x: &[f64], p: &[f64], q: &[f64], c1: f64, c2: f64, beta: f64, r: Option<&[f64]>) -> f64 {
    match r {
        Some(r) => {
            // four partial sums keep the loop from serializing on the adds
            let mut err = [0.0f64; 4];
            let split = x.len() - x.len() % 4;
            let (head, tail) = prev.split_at_mut(split);
            let lanes = head
                .chunks_exact_mut(4)
                .zip(x.chunks_exact(4))
                .zip(p.chunks_exact(4))
                .zip(q.chunks_exact(4))
                .zip(r.chunks_exact(4));
            for ((((xp, xi), pi), qi), ri) in lanes {
                for l in 0..4 {
                    let nv = xi[l] + c1 * pi[l] + c2 * qi[l] + beta * (xi[l] - xp[l]);
                    xp[l] = nv;
                    err[l] += (nv - ri[l]) * (nv - ri[l]);
                }
            }
            let rest = tail.iter_mut().zip(&x[split..]).zip(&p[split..]).zip(&q[split..]).zip(&r[split..]);
            for ((((xp, xi), pi), qi), ri) in rest {
                let nv = xi + c1 * pi + c2 * qi + beta * (xi - *xp);
                *xp = nv;
                err[0] += (nv - ri) * (nv - ri);
            }
            (err[0] + err[1]) + (err[2] + err[3])
        }
        None => {
            for (((xp, xi), pi), qi) in prev.iter_mut().zip(x).zip(p).zip(q) {
                *xp = xi + c1 * pi + c2 * qi + beta * (xi - *xp);
            }
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Termination {
    Converged,
    MaxIters,
    Stalled(String),
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => f.write_str("converged"),
            Termination::MaxIters => f.write_str("max_iters"),
            Termination::Stalled(_) => f.write_str("stalled"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    pub termination: Termination,
    pub final_rse: f64,
    pub metric: Metric,
    pub guard_triggers: usize,
    pub resamples: usize,
    /// Seconds spent iterating (excludes sampler construction).
    pub seconds: f64,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Builds the sampler for `opts.method`, computes the reference solution and
/// runs to convergence.
pub fn solve(problem: &LinearProblem, opts: &SolveOptions) -> Result<SolveResult> {
    let sampler = PairSampler::new(&problem.a, opts.method.sampler_kind())?;
    let x0 = opts.x0.clone().unwrap_or_else(|| vec![0.0; problem.a.ncols()]);
    let reference = problem.reference_solution(&x0)?;
    solve_with(problem, &sampler, Some(&reference), opts)
}

/// Runs one method with a prebuilt sampler.
///
/// With a reference solution the stopping rule is `RSE <= rse_tol`, checked
/// every iteration. Without one it is `‖Ax - b‖/‖b‖ <= sqrt(rse_tol)`,
/// checked at trace points (every `trace_stride` iterations, or every 10 when
/// the stride is 0) since each check costs a full pass over `A`.
pub fn solve_with(
    problem: &LinearProblem,
    sampler: &PairSampler,
    reference: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    solve_system(&problem.a, &problem.b, sampler, reference, opts)
}

/// [`solve_with`] on a borrowed matrix and right-hand side, so several
/// right-hand sides can share one matrix and sampler.
pub fn solve_system(
    a: &DenseMatrix,
    b: &[f64],
    sampler: &PairSampler,
    reference: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let mut stepper = Stepper::new(a, b, sampler, opts.clone())?;
    if let Some(r) = reference {
        stepper.track_reference(r)?;
    }
    let metric = if reference.is_some() {
        Metric::Rse
    } else {
        Metric::RelativeResidual
    };
    let ref_sq = reference.map(norm_sq).unwrap_or(0.0);
    let b_norm = norm(b);
    let rse_of = |st: &Stepper| -> f64 {
        match reference {
            Some(_) => {
                let e = st.error_sq().expect("reference tracked");
                if ref_sq > 0.0 {
                    e / ref_sq
                } else {
                    e
                }
            }
            None => {
                let res = st.residual_norm();
                if b_norm > 0.0 {
                    res / b_norm
                } else {
                    res
                }
            }
        }
    };
    let tol = match metric {
        Metric::Rse => opts.rse_tol,
        Metric::RelativeResidual => opts.rse_tol.sqrt(),
    };
    let check_every = match metric {
        Metric::Rse => 1,
        Metric::RelativeResidual if opts.trace_stride == 0 => 10,
        Metric::RelativeResidual => opts.trace_stride,
    };

    let start = Instant::now();
    let stamp = |start: &Instant| {
        if opts.record_time {
            opts.time_offset + start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };
    let mut current = rse_of(&stepper);
    stepper.state.trace.push(TracePoint {
        iteration: 0,
        rse: current,
        seconds: stamp(&start),
    });

    let termination = loop {
        if current <= tol {
            break Termination::Converged;
        }
        if stepper.state.iteration >= opts.max_iters {
            break Termination::MaxIters;
        }
        match stepper.step() {
            Ok(StepOutcome::Advanced(_)) => {}
            Ok(StepOutcome::Converged) => {
                current = rse_of(&stepper);
                break Termination::Converged;
            }
            Err(e @ Error::StalledAtNonSolution { .. }) => {
                current = rse_of(&stepper);
                break Termination::Stalled(e.to_string());
            }
            Err(e) => return Err(e),
        }
        let k = stepper.state.iteration;
        let on_stride = opts.trace_stride > 0 && k % opts.trace_stride == 0;
        if metric == Metric::Rse || k % check_every == 0 {
            current = rse_of(&stepper);
        }
        if on_stride {
            stepper.state.trace.push(TracePoint {
                iteration: k,
                rse: current,
                seconds: stamp(&start),
            });
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let k = stepper.state.iteration;
    if stepper.state.trace.last().map(|t| t.iteration) != Some(k) {
        stepper.state.trace.push(TracePoint {
            iteration: k,
            rse: current,
            seconds: stamp(&start),
        });
    }
    Ok(SolveResult {
        iterations: k,
        final_rse: current,
        metric,
        guard_triggers: stepper.guard_triggers,
        resamples: stepper.resamples,
        seconds,
        termination,
        trace: std::mem::take(&mut stepper.state.trace),
        x: std::mem::take(&mut stepper.state.x_curr),
    })
}
