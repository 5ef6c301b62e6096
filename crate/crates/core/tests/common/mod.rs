#![allow(dead_code)]

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tada::quantization::{Atom, Point};
use tada::FilteredGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Writes straight to the process stderr so the line survives test capture.
pub fn report(criterion: usize, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[acceptance] criterion {criterion}: {status} ({detail})");
}

/// Symmetric dense weights on `[lo, hi]`; with `grid` the weights are drawn
/// from a coarse lattice so ties occur.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, grid: bool) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = if grid {
                lo + (hi - lo) * rng.random_range(1..=8) as f64 / 8.0
            } else {
                rng.random_range(lo..=hi)
            };
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    w
}

pub fn graph(n: usize, weights: Vec<f64>) -> FilteredGraph {
    FilteredGraph::new(n, weights, 0.0, 2.0).unwrap()
}

/// Order-0 pairs from Kruskal's algorithm with a union-find forest: every
/// merge at weight `w > 0` kills a component born at 0, and one component
/// survives to `alpha_max`.
pub fn union_find_h0(n: usize, weights: &[f64], alpha_max: f64) -> Vec<(f64, f64)> {
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((weights[i * n + j], i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (w, i, j) in edges {
        let (a, b) = (root(&mut parent, i), root(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
            if w > 0.0 {
                out.push((0.0, w));
            }
        }
    }
    if alpha_max > 0.0 {
        out.push((0.0, alpha_max));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

pub fn sorted_pairs(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v
}

/// Global k-means optimum by enumerating every assignment of atoms to
/// `k` labels and using weighted barycenters.
pub fn exhaustive_kmeans_cost(atoms: &[Atom], k: usize) -> f64 {
    let n = atoms.len();
    let total = k.pow(n as u32);
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut c = code;
        let mut label = vec![0; n];
        for l in label.iter_mut() {
            *l = c % k;
            c /= k;
        }
        let mut cost = 0.0;
        for j in 0..k {
            let members: Vec<&Atom> = atoms
                .iter()
                .zip(&label)
                .filter(|(_, &l)| l == j)
                .map(|(a, _)| a)
                .collect();
            let m: f64 = members.iter().map(|a| a.mass).sum();
            if m == 0.0 {
                continue;
            }
            let cx = members.iter().map(|a| a.mass * a.point[0]).sum::<f64>() / m;
            let cy = members.iter().map(|a| a.mass * a.point[1]).sum::<f64>() / m;
            cost += members
                .iter()
                .map(|a| a.mass * ((a.point[0] - cx).powi(2) + (a.point[1] - cy).powi(2)))
                .sum::<f64>();
        }
        best = best.min(cost);
    }
    best
}

pub fn random_atoms(rng: &mut ChaCha8Rng, count: usize) -> Vec<Atom> {
    (0..count)
        .map(|_| Atom {
            point: [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)] as Point,
            mass: rng.random_range(0.1..1.0),
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
