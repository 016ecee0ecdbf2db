mod common;

use std::collections::HashMap;

use common::*;
use prdr_core::{DenseMatrix, PairSampler, SamplerKind, SeededRng};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const KINDS: [SamplerKind; 3] = [SamplerKind::Iid, SamplerKind::WithoutReplacement, SamplerKind::Volume];

fn row_sq(a: &DenseMatrix, i: usize) -> f64 {
    dotv(a.row(i), a.row(i))
}

/// Squared area of the parallelogram spanned by rows `i` and `j`, summed
/// over every 2x2 minor.
fn minor_volume(a: &DenseMatrix, i: usize, j: usize) -> f64 {
    let n = a.ncols();
    let (p, q) = (a.row(i), a.row(j));
    let mut s = 0.0;
    for k in 0..n {
        for l in (k + 1)..n {
            let d = p[k] * q[l] - p[l] * q[k];
            s += d * d;
        }
    }
    s
}

/// Ordered-draw law written out from each strategy's definition.
fn law(a: &DenseMatrix, kind: SamplerKind) -> HashMap<(usize, usize), f64> {
    let m = a.nrows();
    let f: f64 = (0..m).map(|i| row_sq(a, i)).sum();
    let vol: f64 = (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).map(|(i, j)| minor_volume(a, i, j)).sum();
    let mut out = HashMap::new();
    for i in 0..m {
        for j in 0..m {
            let p = match kind {
                SamplerKind::Iid => row_sq(a, i) * row_sq(a, j) / (f * f),
                SamplerKind::WithoutReplacement if i != j => row_sq(a, i) / f * row_sq(a, j) / (f - row_sq(a, i)),
                SamplerKind::Volume if i != j => 0.5 * minor_volume(a, i, j) / vol,
                _ => 0.0,
            };
            if p > 0.0 {
                out.insert((i, j), p);
            }
        }
    }
    out
}

#[test]
fn probabilities_sum_to_one() {
    let mut r = rng(21);
    for _ in 0..50 {
        let m = r.random_range(2..=30);
        let n = r.random_range(2..=8);
        let a = gaussian(&mut r, m, n);
        for kind in KINDS {
            let s = PairSampler::new(&a, kind).unwrap();
            let total: f64 = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| s.pair_probability(i, j)).sum();
            assert!((total - 1.0).abs() <= 1e-12, "{kind}: {total}");
        }
    }
}

#[test]
fn volume_normalizer_matches_frobenius_identity() {
    let mut r = rng(22);
    for _ in 0..50 {
        let m = r.random_range(2..=30);
        let n = r.random_range(2..=8);
        let a = gaussian(&mut r, m, n);
        let s = PairSampler::new(&a, SamplerKind::Volume).unwrap();
        let na = a.to_nalgebra();
        let f2 = na.norm_squared();
        let gram = &na * na.transpose();
        let want = 0.5 * (f2 * f2 - gram.norm_squared());
        let got = s.pair_weight_total().unwrap();
        assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
        for i in 0..m {
            for j in 0..m {
                let w = s.pair_weight(i, j).unwrap();
                assert!(w >= 0.0);
                if i == j {
                    assert_eq!(w, 0.0);
                }
            }
        }
    }
}

#[test]
fn zero_rows_are_never_selected() {
    let mut r = rng(23);
    let mut data = normal_vec(&mut r, 6 * 3);
    data[6..9].fill(0.0);
    let a = DenseMatrix::from_row_major(6, 3, data).unwrap();
    for kind in KINDS {
        let s = PairSampler::new(&a, kind).unwrap();
        for j in 0..6 {
            assert_eq!(s.pair_probability(2, j), 0.0);
            assert_eq!(s.pair_probability(j, 2), 0.0);
        }
        let mut g = SeededRng::new(1);
        for _ in 0..2000 {
            let (i, j) = s.sample_pair(&mut g);
            assert!(i != 2 && j != 2);
        }
    }
}

#[test]
fn library_probabilities_match_written_out_law() {
    let mut r = rng(24);
    for _ in 0..20 {
        let m = r.random_range(2..=15);
        let n = r.random_range(2..=6);
        let a = gaussian(&mut r, m, n);
        for kind in KINDS {
            let s = PairSampler::new(&a, kind).unwrap();
            let want = law(&a, kind);
            for i in 0..m {
                for j in 0..m {
                    let w = want.get(&(i, j)).copied().unwrap_or(0.0);
                    let got = s.pair_probability(i, j);
                    assert!((got - w).abs() <= 1e-12 * w.max(1e-300) + 1e-15, "{kind} ({i},{j}): {got} vs {w}");
                }
            }
        }
    }
}

#[test]
fn draws_pass_chi_square_for_every_kind() {
    let mut r = rng(25);
    let a = gaussian(&mut r, 20, 6);
    let draws = 100_000;
    for kind in KINDS {
        let s = PairSampler::new(&a, kind).unwrap();
        let want = law(&a, kind);
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        let mut g = SeededRng::new(99);
        for _ in 0..draws {
            *counts.entry(s.sample_pair(&mut g)).or_default() += 1;
        }
        assert!(counts.keys().all(|k| want.contains_key(k)), "{kind}: draw outside support");
        // cells with small expectations are pooled
        let (mut stat, mut cells, mut pool_e, mut pool_o) = (0.0, 0usize, 0.0, 0.0);
        for (k, p) in &want {
            let e = p * draws as f64;
            let o = counts.get(k).copied().unwrap_or(0) as f64;
            if e < 5.0 {
                pool_e += e;
                pool_o += o;
            } else {
                stat += (o - e).powi(2) / e;
                cells += 1;
            }
        }
        if pool_e > 0.0 {
            stat += (pool_o - pool_e).powi(2) / pool_e;
            cells += 1;
        }
        let p_value = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
        assert!(p_value >= 1e-3, "{kind}: chi-square {stat} on {cells} cells, p = {p_value}");
    }
}

#[test]
fn volume_frequencies_on_a_20_by_5_matrix() {
    let mut r = rng(26);
    let a = gaussian(&mut r, 20, 5);
    let s = PairSampler::new(&a, SamplerKind::Volume).unwrap();
    let draws = 100_000;
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut g = SeededRng::new(3);
    for _ in 0..draws {
        let (i, j) = s.sample_pair(&mut g);
        *counts.entry((i.min(j), i.max(j))).or_default() += 1;
    }
    let mut tv = 0.0;
    for i in 0..20 {
        for j in (i + 1)..20 {
            let f = counts.get(&(i, j)).copied().unwrap_or(0) as f64 / draws as f64;
            tv += (f - s.unordered_probability(i, j)).abs();
        }
    }
    assert!(0.5 * tv <= 0.02, "total variation {}", 0.5 * tv);
}

#[test]
fn equal_seeds_give_equal_sequences() {
    let mut r = rng(27);
    let a = gaussian(&mut r, 12, 4);
    for kind in KINDS {
        let s = PairSampler::new(&a, kind).unwrap();
        let (mut g1, mut g2) = (SeededRng::new(77), SeededRng::new(77));
        let x: Vec<_> = (0..500).map(|_| s.sample_pair(&mut g1)).collect();
        let y: Vec<_> = (0..500).map(|_| s.sample_pair(&mut g2)).collect();
        assert_eq!(x, y);
        let mut g3 = SeededRng::new(78);
        let z: Vec<_> = (0..500).map(|_| s.sample_pair(&mut g3)).collect();
        assert_ne!(x, z);
    }
}
