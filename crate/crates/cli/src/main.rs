use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prdr_core::harness::plot::plot_trace;
use prdr_core::harness::validate::{validate, ValidateOptions};
use prdr_core::harness::{read_config_file, run_experiment, write_outputs, ExperimentConfig};
use prdr_core::linalg::spectral_summary;
use prdr_core::problems::{gen_spectral, gen_uniform, read_matrix_market, write_matrix_market, Provenance};
use prdr_core::theory::RateReport;
use prdr_core::{DenseMatrix, Error};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "prdr", version, about = "Randomized Douglas-Rachford solvers: generate, benchmark, rates, validate, plot")]
struct Cli {
    /// Base seed for generators and trials.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic matrix as Matrix Market plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Run seeded multi-trial benchmarks and write CSV tables.
    Bench(BenchArgs),
    /// Report the weight matrices' definiteness and contraction factors.
    Rates(RatesArgs),
    /// Monte Carlo, goodness-of-fit and adaptive-step oracle checks.
    Validate(ValidateArgs),
    /// Render iterations.svg and seconds.svg from trace.csv.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Generator {
    Spectral,
    Uniform,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    kind: Generator,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// Rank (spectral).
    #[arg(long, required_if_eq("kind", "spectral"))]
    r: Option<usize>,
    /// Largest singular value (spectral).
    #[arg(long, required_if_eq("kind", "spectral"))]
    sigma1: Option<f64>,
    /// Remaining singular values (spectral).
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Lower end of the entry range (uniform).
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    /// Matrix file; defaults to `<out>/A.mtx`.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct BenchArgs {
    /// spectral | uniform | identity | file
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Matrix Market file (problem = file).
    #[arg(long)]
    path: Option<PathBuf>,
    /// Comma-separated, e.g. `RDR,mRDR(beta=0.05),AmPRDR-II`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Default mRDR momentum.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    rse_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<f64>,
    #[arg(long)]
    trace_stride: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Count sampler construction in every trial's time.
    #[arg(long)]
    include_preprocess: bool,
    /// Write zero timestamps so outputs are bitwise reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Also render the SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct MatrixSource {
    /// Matrix Market file.
    #[arg(required_unless_present = "identity", conflicts_with = "identity")]
    matrix: Option<PathBuf>,
    /// Use the m x m identity instead of a file.
    #[arg(long)]
    identity: Option<usize>,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[command(flatten)]
    source: MatrixSource,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Scale every row to unit norm first.
    #[arg(long)]
    normalize_rows: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    source: MatrixSource,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 30)]
    oracle_steps: usize,
    /// Negative control: distort the samplers.
    #[arg(long, hide = true)]
    tamper: bool,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Defaults to `<out>/trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numeric_degeneracy() {
            EXIT_NUMERIC
        } else if matches!(e, Error::Config(_)) {
            EXIT_USAGE
        } else {
            EXIT_DATA
        };
        Failure { code, msg: e.to_string() }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let file_cfg = match &cli.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| file_cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = match cli.seed {
        Some(s) => s,
        None => match file_cfg.get("seed") {
            Some(s) => s
                .parse()
                .map_err(|_| Failure::from(Error::Config(format!("invalid seed '{s}'"))))?,
            None => 0,
        },
    };
    match cli.command {
        Command::Generate(a) => generate(a, seed, &out),
        Command::Bench(a) => bench(a, file_cfg, cli.seed, &out),
        Command::Rates(a) => rates(a, &out, cli.out.is_some()),
        Command::Validate(a) => validate_cmd(a, seed, &out, cli.out.is_some()),
        Command::Plot(a) => plot(a, &out),
    }
}

fn generate(args: GenerateArgs, seed: u64, out: &Path) -> CliResult {
    let (a, provenance) = match args.kind {
        Generator::Spectral => {
            let (r, s1) = (args.r.expect("required"), args.sigma1.expect("required"));
            (
                gen_spectral(args.m, args.n, r, s1, args.delta, seed)?,
                Provenance::Spectral {
                    m: args.m,
                    n: args.n,
                    r,
                    sigma1: s1,
                    delta: args.delta,
                    seed,
                },
            )
        }
        Generator::Uniform => (
            gen_uniform(args.m, args.n, args.t, seed)?,
            Provenance::Uniform {
                m: args.m,
                n: args.n,
                t: args.t,
                seed,
            },
        ),
    };
    let path = args.output.unwrap_or_else(|| out.join("A.mtx"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    write_matrix_market(&path, &a)?;
    let mut sidecar = path.clone().into_os_string();
    sidecar.push(".json");
    let meta = serde_json::json!({ "provenance": provenance, "rng": prdr_core::SeededRng::ALGORITHM });
    fs::write(&sidecar, serde_json::to_string_pretty(&meta).expect("json")).map_err(Error::from)?;
    println!("wrote {} ({}x{})", path.display(), a.nrows(), a.ncols());
    Ok(())
}

fn bench(args: BenchArgs, mut map: BTreeMap<String, String>, seed: Option<u64>, out: &Path) -> CliResult {
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("problem", args.problem);
    set("m", args.m.map(|v| v.to_string()));
    set("n", args.n.map(|v| v.to_string()));
    set("r", args.r.map(|v| v.to_string()));
    set("sigma1", args.sigma1.map(|v| v.to_string()));
    set("delta", args.delta.map(|v| v.to_string()));
    set("t", args.t.map(|v| v.to_string()));
    set("path", args.path.map(|p| p.display().to_string()));
    set("methods", args.methods);
    set("alpha", args.alpha.map(|v| v.to_string()));
    set("beta", args.beta.map(|v| v.to_string()));
    set("trials", args.trials.map(|v| v.to_string()));
    set("rse_tol", args.rse_tol.map(|v| v.to_string()));
    set("max_iters", args.max_iters.map(|v| v.to_string()));
    set("trace_stride", args.trace_stride.map(|v| v.to_string()));
    set("threads", args.threads.map(|v| v.to_string()));
    set("seed", seed.map(|v| v.to_string()));
    set("out", Some(out.display().to_string()));
    if args.include_preprocess {
        set("include_preprocess", Some("true".into()));
    }
    if args.no_timing {
        set("timing", Some("false".into()));
    }
    if map.get("problem").is_some_and(|p| p == "file") && !map.contains_key("path") {
        return Err(Error::Config("problem = file needs --path".into()).into());
    }
    let cfg = ExperimentConfig::from_map(&map)?;
    let outcome = run_experiment(&cfg)?;
    write_outputs(&outcome, &cfg, &cfg.output_dir)?;
    println!("{}", outcome.provenance);
    println!(
        "{:<10} {:>12} {:>12} {:>12} {:>8}",
        "method", "median_iters", "mean_iters", "mean_secs", "success"
    );
    for r in outcome.summary() {
        println!(
            "{:<10} {:>12.1} {:>12.1} {:>12.4} {:>8.2}",
            r.method, r.median_iters, r.mean_iters, r.mean_seconds, r.success_rate
        );
    }
    if args.plot {
        let text = fs::read_to_string(cfg.output_dir.join("trace.csv")).map_err(Error::from)?;
        plot_trace(&text, &cfg.output_dir)?;
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn load(source: &MatrixSource) -> Result<DenseMatrix, Failure> {
    Ok(match (&source.matrix, source.identity) {
        (_, Some(m)) => DenseMatrix::identity(m)?,
        (Some(p), None) => read_matrix_market(p)?,
        (None, None) => unreachable!("clap enforces a source"),
    })
}

fn rates(args: RatesArgs, out: &Path, write: bool) -> CliResult {
    let mut a = load(&args.source)?;
    if args.normalize_rows {
        a = a.row_normalized();
    }
    let report = RateReport::compute(&a, args.alpha)?;
    let s = report.summary();
    let spec = spectral_summary(&a);
    println!("matrix        {} x {}, rank {}", a.nrows(), a.ncols(), report.rank);
    println!("sigma_max     {:.6e}", spec.sigma_max());
    println!("sigma_min     {:.6e}", spec.sigma_min_nonzero);
    println!("delta         {:.6e}", s.delta);
    println!("M_pd          {}", s.m_pd);
    println!("N_pd          {}", s.n_pd);
    println!("alpha         {}", s.alpha);
    println!("rho_rdr       {:.12}", s.rho_rdr);
    println!("rho_prdr1     {:.12}", s.rho_prdr1);
    println!("rho_prdr2     {:.12}", s.rho_prdr2);
    println!(
        "prdr1 <= rdr  {}",
        if s.rho_prdr1 <= s.rho_rdr + 1e-12 { "yes" } else { "no" }
    );
    let json = serde_json::to_string_pretty(&s).expect("json");
    println!("{json}");
    if write {
        fs::create_dir_all(out).map_err(Error::from)?;
        fs::write(out.join("rates.json"), &json).map_err(Error::from)?;
    }
    Ok(())
}

fn validate_cmd(args: ValidateArgs, seed: u64, out: &Path, write: bool) -> CliResult {
    let a = load(&args.source)?;
    let opts = ValidateOptions {
        samples: args.samples,
        seed,
        oracle_steps: args.oracle_steps,
        tamper: args.tamper,
    };
    let report = validate(&a, &opts);
    for c in &report.checks {
        let status = serde_json::to_value(&c.status).expect("json");
        eprintln!("{:<22} {:<8} {}", c.name, status.as_str().unwrap_or(""), c.detail);
    }
    let json = serde_json::json!({ "passed": report.passed(), "checks": report.checks });
    let text = serde_json::to_string_pretty(&json).expect("json");
    println!("{text}");
    if write {
        fs::create_dir_all(out).map_err(Error::from)?;
        fs::write(out.join("validate.json"), &text).map_err(Error::from)?;
    }
    Ok(())
}

fn plot(args: PlotArgs, out: &Path) -> CliResult {
    let trace = args.trace.unwrap_or_else(|| out.join("trace.csv"));
    let text = fs::read_to_string(&trace).map_err(Error::from)?;
    let dir = trace.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(out);
    for p in plot_trace(&text, dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
