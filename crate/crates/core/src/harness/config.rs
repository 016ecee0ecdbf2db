//! Experiment configuration and the plain-text `key = value` format.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::problems::{gen_spectral, gen_uniform, read_matrix_market, Provenance};
use crate::solvers::Method;

/// Momentum used for mRDR when the configuration names none.
pub const DEFAULT_MRDR_BETA: f64 = 0.3;

/// Where the coefficient matrix comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Spectral {
        m: usize,
        n: usize,
        r: usize,
        sigma1: f64,
        delta: f64,
    },
    Uniform {
        m: usize,
        n: usize,
        t: f64,
    },
    Identity {
        m: usize,
    },
    File {
        path: PathBuf,
    },
}

impl ProblemSpec {
    /// Builds the matrix; generators draw from `seed`.
    pub fn build(&self, seed: u64) -> Result<(DenseMatrix, Provenance)> {
        match self {
            ProblemSpec::Spectral { m, n, r, sigma1, delta } => Ok((
                gen_spectral(*m, *n, *r, *sigma1, *delta, seed)?,
                Provenance::Spectral {
                    m: *m,
                    n: *n,
                    r: *r,
                    sigma1: *sigma1,
                    delta: *delta,
                    seed,
                },
            )),
            ProblemSpec::Uniform { m, n, t } => Ok((
                gen_uniform(*m, *n, *t, seed)?,
                Provenance::Uniform {
                    m: *m,
                    n: *n,
                    t: *t,
                    seed,
                },
            )),
            ProblemSpec::Identity { m } => Ok((DenseMatrix::identity(*m)?, Provenance::Manual)),
            ProblemSpec::File { path } => Ok((
                read_matrix_market(path)?,
                Provenance::File { path: path.clone() },
            )),
        }
    }
}

/// One method with its fixed parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub alpha: f64,
    pub beta: f64,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            alpha: 0.5,
            beta: if method == Method::Mrdr { DEFAULT_MRDR_BETA } else { 0.0 },
        }
    }

    pub fn label(&self) -> &'static str {
        self.method.name()
    }

    /// `NAME` or `NAME(alpha=..., beta=...)`; unset parameters take
    /// `alpha` and, for mRDR, `mrdr_beta`.
    pub fn parse_with_defaults(s: &str, alpha: f64, mrdr_beta: f64) -> Result<Self> {
        let s = s.trim();
        let (name, params) = match s.find('(') {
            Some(open) => {
                let inner = s
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Config(format!("unclosed parameter list in '{s}'")))?;
                (&s[..open], Some(&inner[open + 1..]))
            }
            None => (s, None),
        };
        let method: Method = name.trim().parse()?;
        let mut spec = MethodSpec {
            method,
            alpha,
            beta: if method == Method::Mrdr { mrdr_beta } else { 0.0 },
        };
        for kv in params.into_iter().flat_map(|p| p.split([',', ';'])) {
            if kv.trim().is_empty() {
                continue;
            }
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{kv}'")))?;
            let v: f64 = parse_value(k.trim(), v)?;
            match k.trim() {
                "alpha" => spec.alpha = v,
                "beta" => spec.beta = v,
                other => return Err(Error::Config(format!("unknown method parameter '{other}'"))),
            }
        }
        Ok(spec)
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with_defaults(s, 0.5, DEFAULT_MRDR_BETA)
    }
}

/// Splits a method list on commas outside parentheses.
pub fn parse_method_list(s: &str, alpha: f64, mrdr_beta: f64) -> Result<Vec<MethodSpec>> {
    let mut tokens = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                tokens.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    tokens.push(&s[start..]);
    tokens
        .into_iter()
        .filter(|t| !t.trim().is_empty())
        .map(|t| MethodSpec::parse_with_defaults(t, alpha, mrdr_beta))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodSpec>,
    pub trials: usize,
    pub base_seed: u64,
    pub rse_tol: f64,
    pub max_iters: usize,
    pub output_dir: PathBuf,
    pub trace_stride: usize,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Add sampler construction time to every trial's clock.
    pub include_preprocess: bool,
    /// When false all timestamps are written as 0 so outputs are bitwise
    /// reproducible.
    pub record_time: bool,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec) -> Self {
        Self {
            problem,
            methods: Method::DR_FAMILY.iter().copied().map(MethodSpec::new).collect(),
            trials: 20,
            base_seed: 0,
            rse_tol: 1e-12,
            max_iters: 10_000_000,
            output_dir: PathBuf::from("out"),
            trace_stride: 10,
            threads: 0,
            include_preprocess: false,
            record_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if !(self.rse_tol > 0.0) {
            return Err(Error::Config("rse_tol must be positive".into()));
        }
        for (k, m) in self.methods.iter().enumerate() {
            if self.methods[..k].iter().any(|o| o.method == m.method) {
                return Err(Error::Config(format!("method {} listed twice", m.label())));
            }
        }
        Ok(())
    }

    /// Builds a configuration from `key = value` pairs.
    ///
    /// Keys: `problem` (spectral | uniform | identity | file), `m`, `n`, `r`,
    /// `sigma1`, `delta`, `t`, `path`, `methods`, `alpha`, `beta`, `trials`,
    /// `seed`, `rse_tol`, `max_iters`, `trace_stride`, `out`, `threads`,
    /// `include_preprocess`, `timing`. `alpha` and `beta` set defaults that
    /// per-method parameters override.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "problem",
            "m",
            "n",
            "r",
            "sigma1",
            "delta",
            "t",
            "path",
            "methods",
            "alpha",
            "beta",
            "trials",
            "seed",
            "rse_tol",
            "max_iters",
            "trace_stride",
            "out",
            "threads",
            "include_preprocess",
            "timing",
        ];
        if let Some(k) = map.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        fn req<T: FromStr>(map: &BTreeMap<String, String>, k: &str) -> Result<T> {
            let v = map
                .get(k)
                .ok_or_else(|| Error::Config(format!("missing required key '{k}'")))?;
            parse_value(k, v)
        }
        fn opt<T: FromStr>(map: &BTreeMap<String, String>, k: &str, default: T) -> Result<T> {
            map.get(k).map_or(Ok(default), |v| parse_value(k, v))
        }
        let problem = match get("problem").unwrap_or("spectral") {
            "spectral" => ProblemSpec::Spectral {
                m: req(map, "m")?,
                n: req(map, "n")?,
                r: req(map, "r")?,
                sigma1: req(map, "sigma1")?,
                delta: opt(map, "delta", 1.0)?,
            },
            "uniform" => ProblemSpec::Uniform {
                m: req(map, "m")?,
                n: req(map, "n")?,
                t: opt(map, "t", 0.0)?,
            },
            "identity" => ProblemSpec::Identity { m: req(map, "m")? },
            "file" => ProblemSpec::File {
                path: PathBuf::from(
                    get("path").ok_or_else(|| Error::Config("missing required key 'path'".into()))?,
                ),
            },
            other => return Err(Error::Config(format!("unknown problem '{other}'"))),
        };
        let mut cfg = ExperimentConfig::new(problem);
        let alpha = opt(map, "alpha", 0.5)?;
        let beta = opt(map, "beta", DEFAULT_MRDR_BETA)?;
        cfg.methods = match get("methods") {
            Some(list) => parse_method_list(list, alpha, beta)?,
            None => Method::DR_FAMILY
                .iter()
                .map(|m| MethodSpec::parse_with_defaults(m.name(), alpha, beta))
                .collect::<Result<_>>()?,
        };
        cfg.trials = opt(map, "trials", cfg.trials)?;
        cfg.base_seed = opt(map, "seed", cfg.base_seed)?;
        cfg.rse_tol = opt(map, "rse_tol", cfg.rse_tol)?;
        cfg.max_iters = opt::<f64>(map, "max_iters", cfg.max_iters as f64)? as usize;
        cfg.trace_stride = opt(map, "trace_stride", cfg.trace_stride)?;
        cfg.threads = opt(map, "threads", cfg.threads)?;
        cfg.include_preprocess = opt(map, "include_preprocess", cfg.include_preprocess)?;
        cfg.record_time = opt(map, "timing", cfg.record_time)?;
        if let Some(out) = get("out") {
            cfg.output_dir = PathBuf::from(out);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

/// Parses `key = value` lines; `#` starts a comment. Later keys win.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: k + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            return Err(Error::Parse {
                line: k + 1,
                msg: "empty key".into(),
            });
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config_text(&std::fs::read_to_string(path)?)
}
