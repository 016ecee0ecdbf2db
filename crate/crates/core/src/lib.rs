//! Randomized Douglas-Rachford solvers for consistent linear systems `Ax = b`.
//!
//! The crate covers the solver family (RK, RDR, PRDR with without-replacement
//! and volume sampling, heavy-ball mRDR and adaptive-momentum AmPRDR), the
//! matrices and contraction factors of the convergence theory, problem
//! generators with Matrix Market IO, and the multi-trial benchmark harness
//! used by the `prdr` binary.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod sampling;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{
    is_positive_definite, min_norm_solution, reference_solution, row_geometry, spectral_summary, DenseMatrix,
    RowGeometry, SpectralSummary,
};
pub use problems::{gen_spectral, gen_uniform, make_consistent, LinearProblem, Provenance};
pub use sampling::{PairSampler, SamplerKind, SeededRng};
pub use solvers::{solve, solve_with, Method, SolveOptions, SolveResult, Termination, TracePoint};
pub use theory::{RateReport, Strategy};
