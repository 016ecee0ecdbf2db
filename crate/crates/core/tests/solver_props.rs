mod common;

use common::*;
use prdr_core::harness::{run_on_matrix, ExperimentConfig, MethodSpec, ProblemSpec};
use prdr_core::solvers::{double_reflect, prdr_step, reflect_hyperplane, solve_system, StepOutcome, Stepper};
use prdr_core::{gen_spectral, make_consistent, DenseMatrix, Method, PairSampler, SolveOptions, Termination};
use proptest::prelude::*;
use rand::Rng;

fn vec_n(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn reflection_is_an_involution_and_an_isometry(
        (x, a, h) in (1usize..10).prop_flat_map(|n| (vec_n(n), vec_n(n), vec_n(n))),
        bi in -100.0f64..100.0,
    ) {
        prop_assume!(normv(&a) > 1e-3);
        let y = reflect_hyperplane(&x, &a, bi).unwrap();
        let back = reflect_hyperplane(&y, &a, bi).unwrap();
        let scale = normv(&x) + bi.abs() / normv(&a) + 1.0;
        prop_assert!(normv(&diff(&back, &x)) <= 1e-12 * scale);
        // move h onto the hyperplane
        let c = (dotv(&a, &h) - bi) / dotv(&a, &a);
        let h: Vec<f64> = h.iter().zip(&a).map(|(h, a)| h - c * a).collect();
        let (d0, d1) = (normv(&diff(&x, &h)), normv(&diff(&y, &h)));
        prop_assert!((d0 - d1).abs() <= 1e-10 * (d0 + normv(&h) + scale));
    }
}

proptest! {
    #[test]
    fn prdr_never_moves_away_from_any_solution(
        seed in 0u64..1000,
        alpha in 0.01f64..0.99,
        shift in -5.0f64..5.0,
    ) {
        let mut r = rng(seed);
        let (m, n) = (r.random_range(2..10), r.random_range(2..10));
        let k = r.random_range(2..=m.min(n).max(2)).min(m.min(n));
        prop_assume!(k >= 2);
        let a = gaussian_rank(&mut r, m, n, k);
        let x_star = normal_vec(&mut r, n);
        let b = a.matvec(&x_star);
        // any solution: add a null-space component
        let mut sol = x_star.clone();
        if let Some(v) = null_basis(&a).first() {
            for (s, v) in sol.iter_mut().zip(v) {
                *s += shift * v;
            }
        }
        let x = normal_vec(&mut r, n);
        let pair = (r.random_range(0..m), r.random_range(0..m));
        let y = prdr_step(&x, pair, alpha, &a, &b).unwrap();
        let (e0, e1) = (normv(&diff(&x, &sol)), normv(&diff(&y, &sol)));
        prop_assert!(e1 <= e0 + 1e-10 * e0);
    }
}

#[test]
fn double_reflection_fixes_solutions() {
    let mut r = rng(31);
    for _ in 0..200 {
        let (m, n) = (r.random_range(2..10), r.random_range(2..10));
        let a = gaussian(&mut r, m, n);
        let x = normal_vec(&mut r, n);
        let b = a.matvec(&x);
        let pair = (r.random_range(0..m), r.random_range(0..m));
        let dr = double_reflect(&x, pair, &a, &b).unwrap();
        assert!(normv(&diff(&dr.z, &x)) <= 1e-12 * (1.0 + normv(&x)));
    }
}

#[test]
fn every_method_leaves_a_solution_in_place() {
    let mut r = rng(32);
    let a = gaussian(&mut r, 12, 5);
    let x_star = normal_vec(&mut r, 5);
    let b = a.matvec(&x_star);
    for method in Method::ALL {
        let sampler = PairSampler::new(&a, method.sampler_kind()).unwrap();
        let mut opts = SolveOptions::new(method);
        opts.x0 = Some(x_star.clone());
        let res = solve_system(&a, &b, &sampler, Some(&x_star), &opts).unwrap();
        assert_eq!(res.termination, Termination::Converged, "{method}");
        assert_eq!(res.iterations, 0, "{method}");
        assert_eq!(res.x, x_star, "{method}");
        // stepping anyway keeps the iterate on the solution
        let mut st = Stepper::new(&a, &b, &sampler, SolveOptions::new(method)).unwrap();
        st.state.x_curr = x_star.clone();
        st.state.x_prev = x_star.clone();
        for _ in 0..20 {
            match st.step().unwrap() {
                StepOutcome::Converged => break,
                StepOutcome::Advanced(_) => {
                    assert!(normv(&diff(&st.state.x_curr, &x_star)) <= 1e-12 * normv(&x_star), "{method}")
                }
            }
        }
    }
}

/// Random consistent system with rank `k` and its solution nearest the origin.
/// Full-rank instances are plain Gaussian; a square factor would make them
/// needlessly ill-conditioned.
fn system(r: &mut rand_chacha::ChaCha8Rng, m: usize, n: usize, k: usize) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    let a = if k == m.min(n) { gaussian(r, m, n) } else { gaussian_rank(r, m, n, k) };
    let b = a.matvec(&normal_vec(r, n));
    let x_ref = pinv_solve(&a, &b);
    (a, b, x_ref)
}

#[test]
fn adaptive_step_lands_no_farther_than_the_midpoint() {
    let mut r = rng(33);
    for inst in 0..20u64 {
        let (m, n) = (r.random_range(6..25), r.random_range(3..12));
        let k = r.random_range(2..=m.min(n));
        let (a, b, x_ref) = system(&mut r, m, n, k);
        let method = if inst % 2 == 0 { Method::AmprdrI } else { Method::AmprdrII };
        let sampler = PairSampler::new(&a, method.sampler_kind()).unwrap();
        let mut st = Stepper::new(&a, &b, &sampler, SolveOptions::new(method).with_seed(inst)).unwrap();
        for _ in 0..300 {
            let x = st.state.x_curr.clone();
            let StepOutcome::Advanced(_) = st.step().unwrap() else { break };
            let e_old = diff(&x, &x_ref);
            let p = st.last_step();
            let e_mid: Vec<f64> = e_old.iter().zip(&p).map(|(e, p)| e + 0.5 * p).collect();
            let e_new = diff(&st.state.x_curr, &x_ref);
            let scale = normv(&x_ref);
            assert!(normv(&e_new) <= normv(&e_mid) + 1e-10 * scale);
            assert!(normv(&e_mid) <= normv(&e_old) + 1e-10 * scale);
        }
    }
}

#[test]
fn gram_guard_is_rare_on_generic_instances() {
    let mut r = rng(34);
    let (mut steps, mut guarded) = (0usize, 0usize);
    for inst in 0..10u64 {
        let (a, b, x_ref) = system(&mut r, 40, 15, 15);
        let method = if inst % 2 == 0 { Method::AmprdrI } else { Method::AmprdrII };
        let sampler = PairSampler::new(&a, method.sampler_kind()).unwrap();
        let opts = SolveOptions::new(method).with_seed(inst);
        let res = solve_system(&a, &b, &sampler, Some(&x_ref), &opts).unwrap();
        assert!(res.converged(), "{inst}: {:?}", res.termination);
        steps += res.iterations;
        // the first step always takes the fallback by construction
        guarded += res.guard_triggers.saturating_sub(1);
    }
    assert!((guarded as f64) < 1e-3 * steps as f64, "{guarded} of {steps}");
}

#[test]
fn iterates_stay_in_the_row_space_offset() {
    let mut r = rng(35);
    for (inst, method) in Method::ALL.into_iter().enumerate() {
        let (a, b, x_ref) = system(&mut r, 8, 14, 5);
        let basis = null_basis(&a);
        assert_eq!(basis.len(), 9);
        let sampler = PairSampler::new(&a, method.sampler_kind()).unwrap();
        let mut opts = SolveOptions::new(method).with_seed(inst as u64);
        if method == Method::Mrdr {
            opts.beta = 0.3;
        }
        let mut st = Stepper::new(&a, &b, &sampler, opts).unwrap();
        for _ in 0..2000 {
            let StepOutcome::Advanced(_) = st.step().unwrap() else { break };
            let e = diff(&st.state.x_curr, &x_ref);
            let en = normv(&e);
            if en <= 1e-6 * normv(&x_ref) {
                break;
            }
            for v in &basis {
                assert!(dotv(&e, v).abs() <= 1e-8 * en, "{method}: null component");
            }
        }
    }
}

#[test]
fn identity_systems_converge_for_every_method() {
    for m in [2usize, 5, 30] {
        let a = DenseMatrix::identity(m).unwrap();
        let p = make_consistent(a, 4);
        for method in Method::ALL {
            let mut opts = SolveOptions::new(method).with_seed(1);
            if method == Method::Mrdr {
                opts.beta = 0.3;
            }
            let res = prdr_core::solve(&p, &opts).unwrap();
            assert!(res.converged(), "{method} on I_{m}");
            assert!(res.final_rse <= 1e-12);
            let bound = 50.0 * m as f64 * (1e12f64).ln();
            assert!((res.iterations as f64) <= bound, "{method} on I_{m}: {}", res.iterations);
        }
    }
}

#[test]
fn rk_solves_a_small_system() {
    let a = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
    let p = make_consistent(a, 2);
    let res = prdr_core::solve(&p, &SolveOptions::new(Method::Rk)).unwrap();
    assert!(res.converged() && res.final_rse <= 1e-12);
}

fn median_iterations(cfg: &ExperimentConfig, method: Method) -> f64 {
    let (a, prov) = cfg.problem.build(cfg.base_seed).unwrap();
    let out = run_on_matrix(cfg, &a, prov).unwrap();
    let mut its: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.method == method.name())
        .map(|r| if r.converged() { r.iterations as f64 } else { f64::INFINITY })
        .collect();
    its.sort_by(f64::total_cmp);
    0.5 * (its[its.len() / 2 - 1] + its[its.len() / 2])
}

/// Expected number of uniformly drawn distinct pairs until all `m`
/// coordinates have been drawn at least once.
fn pair_cover_time(m: usize) -> f64 {
    let pairs = (m * (m - 1) / 2) as f64;
    let mut t = vec![0.0f64; m + 1];
    for u in 1..=m {
        let both = (u * u.saturating_sub(1) / 2) as f64 / pairs;
        let one = (u * (m - u)) as f64 / pairs;
        let rest = if u >= 2 { both * t[u - 2] } else { 0.0 };
        t[u] = (1.0 + rest + one * t[u - 1]) / (both + one);
    }
    t[m]
}

#[test]
fn identity_prdr_follows_its_contraction_factor() {
    let m = 100;
    let a = DenseMatrix::identity(m).unwrap();
    let sampler = PairSampler::new(&a, Method::PrdrI.sampler_kind()).unwrap();
    // E‖e_k‖² = (1 - 2/m)^k ‖e_0‖² exactly: each step zeroes two error entries
    let (k, trials) = (60, 400);
    let mut mean_ratio = 0.0;
    for t in 0..trials {
        let p = make_consistent(a.clone(), 1000 + t);
        let x_star = p.x_star.clone().unwrap();
        let mut st = Stepper::new(&p.a, &p.b, &sampler, SolveOptions::new(Method::PrdrI).with_seed(t)).unwrap();
        for _ in 0..k {
            st.step().unwrap();
        }
        mean_ratio += normv(&diff(&st.state.x_curr, &x_star)).powi(2) / normv(&x_star).powi(2) / trials as f64;
    }
    let rho = 1.0 - 2.0 / m as f64;
    let want = rho.powi(k as i32);
    assert!((mean_ratio - want).abs() <= 0.05 * want, "mean ratio {mean_ratio} vs {want}");

    // the error vanishes exactly once every entry was drawn, long before the
    // rate alone would reach 1e-12
    let mut cfg = ExperimentConfig::new(ProblemSpec::Identity { m });
    cfg.methods = vec![MethodSpec::new(Method::PrdrI)];
    cfg.record_time = false;
    cfg.trace_stride = 0;
    let med = median_iterations(&cfg, Method::PrdrI);
    let cover = pair_cover_time(m);
    assert!(med <= 2.0 * cover && med >= 0.5 * cover, "median {med} vs cover time {cover}");
    assert!(med < (1e-12f64).ln() / rho.ln());
}

#[test]
fn adaptive_volume_method_beats_rdr_on_a_skewed_spectrum() {
    let mut cfg = ExperimentConfig::new(ProblemSpec::Spectral {
        m: 500,
        n: 200,
        r: 100,
        sigma1: 100.0,
        delta: 1.0,
    });
    cfg.methods = vec![MethodSpec::new(Method::Rdr), MethodSpec::new(Method::AmprdrII)];
    cfg.record_time = false;
    cfg.trace_stride = 0;
    let rdr = median_iterations(&cfg, Method::Rdr);
    let amp = median_iterations(&cfg, Method::AmprdrII);
    assert!(amp < rdr, "AmPRDR-II {amp} vs RDR {rdr}");
}

#[test]
fn spectral_matrix_reaches_tolerance() {
    let a = gen_spectral(60, 20, 10, 10.0, 1.0, 5).unwrap();
    let p = make_consistent(a, 6);
    for method in [Method::PrdrII, Method::AmprdrI] {
        let res = prdr_core::solve(&p, &SolveOptions::new(method).with_seed(2)).unwrap();
        assert!(res.converged());
        assert!(res.trace.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }
}
