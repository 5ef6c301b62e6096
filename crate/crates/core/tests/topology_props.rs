//! Properties of windowing, similarity, persistence and vectorization.

mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use tada::persistence::{binomial, rips_persistence};
use tada::timeseries::{similarity, slice_windows};
use tada::vectorization::{Vectorizer, KERNEL_LIPSCHITZ};
use tada::{PersistenceDiagram, PersistencePoint, TimeSeries, WeightFn, WindowConfig};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn series(seed: u64, d: usize, len: usize) -> TimeSeries {
    let mut r = rng(seed);
    let channels = (0..d)
        .map(|_| (0..len).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    TimeSeries::from_channels(channels).unwrap()
}

/// Betti numbers of the clique complex of `{w <= t}` by Z/2 rank of the
/// boundary maps.
fn betti_at(n: usize, w: &[f64], t: f64, max_order: usize) -> Vec<usize> {
    let mut simplices: Vec<Vec<Vec<usize>>> = vec![(0..n).map(|v| vec![v]).collect()];
    for dim in 1..=max_order + 1 {
        let mut next = Vec::new();
        for s in &simplices[dim - 1] {
            for v in (s[dim - 1] + 1)..n {
                if s.iter().all(|&u| w[u * n + v] <= t) {
                    let mut c = s.clone();
                    c.push(v);
                    next.push(c);
                }
            }
        }
        simplices.push(next);
    }
    let rank = |dim: usize| -> usize {
        if dim == 0 || simplices[dim].is_empty() {
            return 0;
        }
        let faces = &simplices[dim - 1];
        let mut rows: Vec<Vec<bool>> = simplices[dim]
            .iter()
            .map(|s| {
                let mut row = vec![false; faces.len()];
                for skip in 0..s.len() {
                    let face: Vec<usize> = s
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != skip)
                        .map(|(_, &v)| v)
                        .collect();
                    row[faces.iter().position(|f| *f == face).unwrap()] = true;
                }
                row
            })
            .collect();
        let mut r = 0;
        for col in 0..faces.len() {
            if let Some(p) = (r..rows.len()).find(|&i| rows[i][col]) {
                rows.swap(r, p);
                for i in 0..rows.len() {
                    if i != r && rows[i][col] {
                        let pivot = rows[r].clone();
                        rows[i].iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= *b);
                    }
                }
                r += 1;
            }
        }
        r
    };
    (0..=max_order)
        .map(|d| simplices[d].len() - rank(d) - rank(d + 1))
        .collect()
}

#[test]
fn betti_numbers_match_rank_oracle() {
    let mut r = rng(21);
    for i in 0..60 {
        let n = 4 + i % 4;
        let w = random_weights(&mut r, n, 0.0, 2.0, i % 2 == 0);
        let d = rips_persistence(&graph(n, w.clone()), 3, WeightFn::Unit).unwrap();
        let mut levels: Vec<f64> = w.iter().copied().chain([0.0, 2.0]).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        for pair in levels.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let oracle = betti_at(n, &w, t, 2);
            for order in 0..=2 {
                let alive = d[order].points.iter().filter(|p| p.birth <= t && t < p.death).count();
                assert_eq!(alive, oracle[order], "n={n} t={t} order={order}");
            }
        }
    }
}

#[test]
fn slice_windows_count_and_length() {
    for (len, delta, stride) in [
        (10, 2, 1),
        (100, 10, 10),
        (101, 10, 10),
        (109, 10, 10),
        (1000, 100, 7),
        (5, 5, 3),
    ] {
        let w = slice_windows(len, &WindowConfig::new(delta, stride)).unwrap();
        assert_eq!(w.len(), (len - delta) / stride + 1);
        assert!(w.iter().all(|r| r.len() == delta && r.end <= len));
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn similarity_matrix_is_valid(seed in 0u64..1000, d in 2usize..7) {
        let ts = series(seed, d, 60);
        let s = similarity(&ts, 5..45, 0).unwrap();
        for i in 0..d {
            prop_assert_eq!(s.get(i, i), 0.0);
            for j in 0..d {
                prop_assert_eq!(s.get(i, j), s.get(j, i));
                prop_assert!((0.0..=2.0).contains(&s.get(i, j)));
            }
        }
    }

    #[test]
    fn similarity_affine_invariance(seed in 0u64..1000, d in 2usize..6, a in 0.01f64..50.0, b in -10.0f64..10.0) {
        let ts = series(seed, d, 50);
        let mut channels = ts.channels().to_vec();
        channels[0].iter_mut().for_each(|x| *x = a * *x + b);
        let mapped = TimeSeries::from_channels(channels).unwrap();
        let s1 = similarity(&ts, 0..50, 0).unwrap();
        let s2 = similarity(&mapped, 0..50, 0).unwrap();
        for (x, y) in s1.as_slice().iter().zip(s2.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn similarity_permutation_covariance(seed in 0u64..1000, rot in 1usize..5) {
        let d = 6;
        let ts = series(seed, d, 40);
        let perm: Vec<usize> = (0..d).map(|i| (i + rot) % d).collect();
        let s1 = similarity(&ts, 0..40, 0).unwrap();
        let s2 = similarity(&ts.permute_channels(&perm).unwrap(), 0..40, 0).unwrap();
        for i in 0..d {
            for j in 0..d {
                prop_assert_eq!(s2.get(i, j), s1.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn diagrams_bounded_and_sized(seed in 0u64..10_000, n in 2usize..9) {
        let mut r = rng(seed);
        let w = random_weights(&mut r, n, 0.0, 2.0, seed % 3 == 0);
        let d = rips_persistence(&graph(n, w), 3.min(n - 1), WeightFn::Unit).unwrap();
        for (order, diag) in d.iter().enumerate() {
            prop_assert!(diag.len() <= binomial(n, order + 1));
            for p in &diag.points {
                prop_assert!(0.0 <= p.birth && p.birth < p.death && p.death <= 2.0);
            }
        }
    }

    #[test]
    fn diagrams_invariant_under_relabeling(seed in 0u64..10_000, n in 4usize..9) {
        let mut r = rng(seed);
        let w = random_weights(&mut r, n, 0.0, 2.0, seed % 2 == 0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let mut w2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w2[i * n + j] = w[perm[i] * n + perm[j]];
            }
        }
        let d1 = rips_persistence(&graph(n, w), 3, WeightFn::Unit).unwrap();
        let d2 = rips_persistence(&graph(n, w2), 3, WeightFn::Unit).unwrap();
        for order in 0..=2 {
            prop_assert_eq!(sorted_pairs(d1[order].pairs()), sorted_pairs(d2[order].pairs()));
        }
    }
}

fn random_diagram(r: &mut rand_chacha::ChaCha8Rng, count: usize) -> PersistenceDiagram {
    let points = (0..count)
        .map(|_| {
            let b = r.random_range(0.0..1.5);
            PersistencePoint::new(b, r.random_range(b + 0.01..2.0), r.random_range(0.1..2.0))
        })
        .collect();
    PersistenceDiagram::new(1, points)
}

/// Centers spread on a jittered grid so every bandwidth stays above 0.15.
fn random_vectorizer(r: &mut rand_chacha::ChaCha8Rng, k: usize) -> Vectorizer {
    let centers = (0..k)
        .map(|j| {
            [
                0.4 * (j % 5) as f64 + r.random_range(0.0..0.05),
                0.5 * (j / 5) as f64 + 0.6 + r.random_range(0.0..0.05),
            ]
        })
        .collect();
    Vectorizer::new(centers, 1, 1.0).unwrap()
}

fn union(a: &PersistenceDiagram, sa: f64, b: &PersistenceDiagram, sb: f64) -> PersistenceDiagram {
    let scale = |d: &PersistenceDiagram, s: f64| {
        d.points
            .iter()
            .map(move |p| PersistencePoint::new(p.birth, p.death, s * p.weight))
            .collect::<Vec<_>>()
    };
    let mut pts = scale(a, sa);
    pts.extend(scale(b, sb));
    PersistenceDiagram::new(1, pts)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn vectorize_is_linear(seed in 0u64..10_000, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let mut r = rng(seed);
        let v = random_vectorizer(&mut r, 8);
        let x = random_diagram(&mut r, 6);
        let y = random_diagram(&mut r, 4);
        let lhs = v.vectorize(&union(&x, a, &y, b));
        let (vx, vy) = (v.vectorize(&x), v.vectorize(&y));
        for j in 0..v.dim() {
            let rhs = a * vx[j] + b * vy[j];
            prop_assert!((lhs[j] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn vectorize_monotone_and_bounded(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let v = random_vectorizer(&mut r, 10);
        let x = random_diagram(&mut r, 7);
        let p = random_diagram(&mut r, 1);
        let before = v.vectorize(&x);
        let alone = v.vectorize(&p);
        let after = v.vectorize(&union(&x, 1.0, &p, 1.0));
        let mass = x.total_mass();
        for j in 0..v.dim() {
            prop_assert!(alone[j] > 0.0);
            prop_assert!(after[j] >= before[j]);
            prop_assert!((after[j] - before[j] - alone[j]).abs() <= 1e-12);
            prop_assert!(before[j] >= 0.0 && before[j] <= mass * (1.0 + 1e-12));
        }
    }

    #[test]
    fn vectorize_lipschitz(seed in 0u64..10_000, eps in 1e-4f64..0.05) {
        let mut r = rng(seed);
        let v = random_vectorizer(&mut r, 10);
        let x = random_diagram(&mut r, 8);
        let moved = PersistenceDiagram::new(
            1,
            x.points
                .iter()
                .map(|p| {
                    let angle = r.random_range(0.0..std::f64::consts::TAU);
                    let step = eps * r.random_range(0.0..=1.0);
                    PersistencePoint::new(p.birth + step * angle.cos(), p.death + step * angle.sin(), p.weight)
                })
                .collect(),
        );
        let (a, b) = (v.vectorize(&x), v.vectorize(&moved));
        let mass = x.total_mass();
        for j in 0..v.dim() {
            let bound = mass * KERNEL_LIPSCHITZ * eps / v.bandwidths[j];
            prop_assert!((a[j] - b[j]).abs() <= bound + 1e-12);
        }
    }
}
