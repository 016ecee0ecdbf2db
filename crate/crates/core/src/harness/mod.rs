//! Multi-trial benchmark harness: runs every configured method on seeded
//! right-hand sides, then writes trace, trial and summary tables.

mod config;
pub mod plot;
pub mod validate;

pub use config::{
    parse_config_text, parse_method_list, read_config_file, ExperimentConfig, MethodSpec, ProblemSpec,
    DEFAULT_MRDR_BETA,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, PseudoInverse};
use crate::problems::{draw_solution, Provenance};
use crate::sampling::{PairSampler, SamplerKind};
use crate::solvers::{solve_system, SolveOptions, TracePoint};

pub const TRACE_HEADER: &str = "method,trial,iteration,rse,seconds";
pub const SUMMARY_HEADER: &str = "method,median_iters,mean_iters,mean_seconds,success_rate";
pub const TRIALS_HEADER: &str = "method,trial,seed,iterations,wall_seconds,final_rse,terminated,guard_triggers";

/// Outcome of one (method, trial) run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    pub iterations: usize,
    /// Clock at the last trace point, including preprocessing when requested.
    pub wall_seconds: f64,
    pub final_rse: f64,
    /// `converged`, `max_iters`, `stalled`, or `error: ...`.
    pub terminated: String,
    pub guard_triggers: usize,
}

impl TrialRecord {
    pub fn converged(&self) -> bool {
        self.terminated == "converged"
    }

    fn errored(&self) -> bool {
        self.terminated.starts_with("error")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub median_iters: f64,
    pub mean_iters: f64,
    pub mean_seconds: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub provenance: Provenance,
    /// Sorted by (method, trial).
    pub records: Vec<TrialRecord>,
    /// `traces[k]` belongs to `records[k]`.
    pub traces: Vec<Vec<TracePoint>>,
    /// Sampler construction seconds per method, in configuration order.
    pub preprocess: Vec<(String, f64)>,
}

impl ExperimentOutcome {
    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.records)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per-method statistics. Trials that errored count as failures but are
/// left out of the iteration and time statistics.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.method.as_str()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(method, rs)| {
            let ok: Vec<&&TrialRecord> = rs.iter().filter(|r| !r.errored()).collect();
            let mut iters: Vec<f64> = ok.iter().map(|r| r.iterations as f64).collect();
            iters.sort_by(f64::total_cmp);
            let secs: Vec<f64> = ok.iter().map(|r| r.wall_seconds).collect();
            let success = rs.iter().filter(|r| r.converged()).count() as f64 / rs.len() as f64;
            SummaryRow {
                method: method.to_string(),
                median_iters: median(&iters),
                mean_iters: mean(&iters),
                mean_seconds: mean(&secs),
                success_rate: success,
            }
        })
        .collect()
}

/// Trial `t` solves `A x = A x*_t` with `x*_t` and the solver seeded by
/// `base_seed + t`; `A` is built once from `base_seed` and each sampler is
/// built once and shared by all trials.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (a, provenance) = cfg.problem.build(cfg.base_seed)?;
    run_on_matrix(cfg, &a, provenance)
}

pub fn run_on_matrix(cfg: &ExperimentConfig, a: &DenseMatrix, provenance: Provenance) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let pinv = PseudoInverse::new(a);

    // one sampler per kind, timed
    let mut samplers: Vec<(SamplerKind, PairSampler, f64)> = Vec::new();
    for spec in &cfg.methods {
        let kind = spec.method.sampler_kind();
        if samplers.iter().all(|(k, _, _)| *k != kind) {
            let t0 = Instant::now();
            let s = PairSampler::new(a, kind)?;
            samplers.push((kind, s, t0.elapsed().as_secs_f64()));
        }
    }
    let sampler_for = |kind: SamplerKind| samplers.iter().find(|(k, _, _)| *k == kind).expect("built");
    let preprocess: Vec<(String, f64)> = cfg
        .methods
        .iter()
        .map(|s| (s.label().to_string(), sampler_for(s.method.sampler_kind()).2))
        .collect();

    let rhs: Vec<(u64, Vec<f64>, Vec<f64>)> = (0..cfg.trials)
        .map(|t| {
            let seed = cfg.base_seed.wrapping_add(t as u64);
            let x_star = draw_solution(a.ncols(), seed);
            let b = a.matvec(&x_star);
            let x_ref = pinv.project_onto_solutions(a, &b, &vec![0.0; a.ncols()])?;
            Ok((seed, b, x_ref))
        })
        .collect::<Result<_>>()?;

    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for (mi, _) in cfg.methods.iter().enumerate() {
        for t in 0..cfg.trials {
            jobs.push((mi, t));
        }
    }
    let run_job = |&(mi, t): &(usize, usize)| -> (TrialRecord, Vec<TracePoint>) {
        let spec = &cfg.methods[mi];
        let (_, sampler, pre) = sampler_for(spec.method.sampler_kind());
        let (seed, b, x_ref) = &rhs[t];
        let mut opts = SolveOptions::new(spec.method)
            .with_alpha(spec.alpha)
            .with_beta(spec.beta)
            .with_seed(*seed)
            .with_rse_tol(cfg.rse_tol)
            .with_max_iters(cfg.max_iters)
            .with_trace_stride(cfg.trace_stride);
        opts.record_time = cfg.record_time;
        if cfg.include_preprocess {
            opts.time_offset = *pre;
        }
        let label = spec.label().to_string();
        match solve_system(a, b, sampler, Some(x_ref), &opts) {
            Ok(res) => {
                let wall = res.trace.last().map_or(0.0, |p| p.seconds);
                let rec = TrialRecord {
                    method: label,
                    trial: t,
                    seed: *seed,
                    iterations: res.iterations,
                    wall_seconds: wall,
                    final_rse: res.final_rse,
                    terminated: res.termination.to_string(),
                    guard_triggers: res.guard_triggers,
                };
                (rec, res.trace)
            }
            Err(e) => (
                TrialRecord {
                    method: label,
                    trial: t,
                    seed: *seed,
                    iterations: 0,
                    wall_seconds: 0.0,
                    final_rse: f64::NAN,
                    terminated: format!("error: {e}"),
                    guard_triggers: 0,
                },
                Vec::new(),
            ),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut results: Vec<(TrialRecord, Vec<TracePoint>)> = pool.install(|| jobs.par_iter().map(run_job).collect());
    results.sort_by(|x, y| (x.0.method.as_str(), x.0.trial).cmp(&(y.0.method.as_str(), y.0.trial)));
    let (records, traces) = results.into_iter().unzip();
    Ok(ExperimentOutcome {
        provenance,
        records,
        traces,
        preprocess,
    })
}

/// Shortest round-trip representation in exponent form.
fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn trace_csv(outcome: &ExperimentOutcome) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for (rec, trace) in outcome.records.iter().zip(&outcome.traces) {
        for p in trace {
            let _ = writeln!(s, "{},{},{},{},{}", rec.method, rec.trial, p.iteration, num(p.rse), num(p.seconds));
        }
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.method,
            num(r.median_iters),
            num(r.mean_iters),
            num(r.mean_seconds),
            num(r.success_rate)
        );
    }
    s
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(TRIALS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.trial,
            r.seed,
            r.iterations,
            num(r.wall_seconds),
            num(r.final_rse),
            r.terminated.replace(',', ";"),
            r.guard_triggers
        );
    }
    s
}

/// Writes `trace.csv`, `summary.csv`, `trials.csv`, `preprocess.csv` and
/// `problem.json` into `dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trace.csv"), trace_csv(outcome))?;
    fs::write(dir.join("summary.csv"), summary_csv(&outcome.summary()))?;
    fs::write(dir.join("trials.csv"), trials_csv(&outcome.records))?;
    let mut pre = String::from("method,preprocess_seconds,included\n");
    for (m, secs) in &outcome.preprocess {
        let _ = writeln!(pre, "{m},{},{}", num(*secs), cfg.include_preprocess);
    }
    fs::write(dir.join("preprocess.csv"), pre)?;
    let meta = serde_json::json!({
        "provenance": outcome.provenance,
        "trials": cfg.trials,
        "base_seed": cfg.base_seed,
        "rse_tol": cfg.rse_tol,
        "max_iters": cfg.max_iters,
        "trace_stride": cfg.trace_stride,
        "methods": cfg.methods.iter().map(|m| serde_json::json!({
            "method": m.label(), "alpha": m.alpha, "beta": m.beta
        })).collect::<Vec<_>>(),
    });
    fs::write(
        dir.join("problem.json"),
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(())
}

/// One parsed `trace.csv` row.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub method: String,
    pub trial: usize,
    pub iteration: usize,
    pub rse: f64,
    pub seconds: f64,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header '{TRACE_HEADER}'"),
            })
        }
    }
    let mut rows = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse {
            line: k + 1,
            msg: format!("invalid {what}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("field count"));
        }
        rows.push(TraceRow {
            method: f[0].to_string(),
            trial: f[1].parse().map_err(|_| bad("trial"))?,
            iteration: f[2].parse().map_err(|_| bad("iteration"))?,
            rse: f[3].parse().map_err(|_| bad("rse"))?,
            seconds: f[4].parse().map_err(|_| bad("seconds"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::Method;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ProblemSpec::Spectral {
            m: 30,
            n: 10,
            r: 8,
            sigma1: 5.0,
            delta: 1.0,
        });
        cfg.trials = 3;
        cfg.base_seed = 4;
        cfg.record_time = false;
        cfg.threads = 2;
        cfg
    }

    #[test]
    fn experiment_is_deterministic_and_sorted() {
        let cfg = small_cfg();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(trace_csv(&a), trace_csv(&b));
        assert_eq!(a.records.len(), 18);
        let keys: Vec<(String, usize)> = a.records.iter().map(|r| (r.method.clone(), r.trial)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &a.records {
            assert!(r.converged(), "{r:?}");
            assert!(r.final_rse <= cfg.rse_tol);
            assert_eq!(r.seed, 4 + r.trial as u64);
        }
    }

    #[test]
    fn summary_statistics() {
        let rec = |m: &str, it: usize, s: f64, term: &str| TrialRecord {
            method: m.into(),
            trial: 0,
            seed: 0,
            iterations: it,
            wall_seconds: s,
            final_rse: 0.0,
            terminated: term.into(),
            guard_triggers: 0,
        };
        let rows = summarize(&[
            rec("B", 10, 1.0, "converged"),
            rec("B", 30, 2.0, "converged"),
            rec("B", 20, 3.0, "max_iters"),
            rec("B", 0, 0.0, "error: x"),
            rec("A", 5, 0.5, "converged"),
        ]);
        assert_eq!(rows[0].method, "A");
        assert_eq!(rows[1].median_iters, 20.0);
        assert_eq!(rows[1].mean_iters, 20.0);
        assert_eq!(rows[1].mean_seconds, 2.0);
        assert_eq!(rows[1].success_rate, 0.5);
        let rows = summarize(&[rec("C", 1, 0.0, "converged"), rec("C", 4, 0.0, "converged")]);
        assert_eq!(rows[0].median_iters, 2.5);
    }

    #[test]
    fn trace_csv_parses_back() {
        let mut cfg = small_cfg();
        cfg.methods = vec![MethodSpec::new(Method::PrdrII)];
        let out = run_experiment(&cfg).unwrap();
        let text = trace_csv(&out);
        let rows = parse_trace_csv(&text).unwrap();
        let total: usize = out.traces.iter().map(Vec::len).sum();
        assert_eq!(rows.len(), total);
        assert_eq!(rows[0].iteration, 0);
        assert!(parse_trace_csv("a,b\n").is_err());
        assert!(parse_trace_csv(&format!("{TRACE_HEADER}\nx,1,2\n")).is_err());
    }
}
