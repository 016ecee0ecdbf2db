use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use prdr_bench::fixture;
use prdr_core::solvers::{Stepper, StepOutcome};
use prdr_core::{solve, Method, PairSampler, SamplerKind, SeededRng, SolveOptions};

fn sampler_draws(c: &mut Criterion) {
    let p = fixture(500, 200, 100.0, 1);
    let mut g = c.benchmark_group("sample_pair");
    for kind in [SamplerKind::Iid, SamplerKind::WithoutReplacement, SamplerKind::Volume] {
        let s = PairSampler::new(&p.a, kind).unwrap();
        let mut rng = SeededRng::new(2);
        g.bench_function(BenchmarkId::from_parameter(kind), |b| b.iter(|| s.sample_pair(&mut rng)));
    }
    g.finish();
}

fn sampler_build(c: &mut Criterion) {
    let p = fixture(500, 200, 100.0, 1);
    c.bench_function("volume_sampler_build_500x200", |b| {
        b.iter(|| PairSampler::new(&p.a, SamplerKind::Volume).unwrap())
    });
}

fn single_step(c: &mut Criterion) {
    let p = fixture(500, 200, 100.0, 3);
    let mut g = c.benchmark_group("step");
    for method in Method::ALL {
        let sampler = PairSampler::new(&p.a, method.sampler_kind()).unwrap();
        let opts = SolveOptions::new(method).with_seed(4);
        g.bench_function(BenchmarkId::from_parameter(method), |b| {
            b.iter_batched_ref(
                || Stepper::new(&p.a, &p.b, &sampler, opts.clone()).unwrap(),
                |st| {
                    for _ in 0..10 {
                        if let StepOutcome::Converged = st.step().unwrap() {
                            break;
                        }
                    }
                },
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn small_solve(c: &mut Criterion) {
    let p = fixture(100, 40, 10.0, 5);
    let mut g = c.benchmark_group("solve_100x40");
    g.sample_size(10);
    for method in [Method::Rdr, Method::PrdrII, Method::AmprdrII] {
        let opts = SolveOptions::new(method).with_seed(6).with_rse_tol(1e-10);
        g.bench_function(BenchmarkId::from_parameter(method), |b| b.iter(|| solve(&p, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, sampler_draws, sampler_build, single_step, small_solve);
criterion_main!(benches);
