//! Vietoris-Rips persistent homology of complete weighted graphs.
//!
//! Simplices of the clique complex enter at the largest weight among their
//! edges; vertices enter at `alpha_min`. Diagrams are computed by Z/2
//! column reduction of the boundary matrix, one dimension at a time from the
//! top down so that pivot rows of dimension `k + 1` can be cleared from the
//! dimension-`k` pass.
//!
//! Pairs with `birth == death` are dropped. Classes that never die are closed
//! at `alpha_max`, which keeps every diagram a finite measure on
//! `[alpha_min, alpha_max]^2`.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::SimilarityMatrix;

/// Combined point count above which [`bottleneck_distance`] refuses to run.
pub const BOTTLENECK_POINT_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredGraph {
    n: usize,
    weights: Vec<f64>,
    alpha_min: f64,
    alpha_max: f64,
}

impl FilteredGraph {
    pub fn new(n: usize, weights: Vec<f64>, alpha_min: f64, alpha_max: f64) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a graph on {n} vertices",
                weights.len()
            )));
        }
        if alpha_min > alpha_max {
            return Err(Error::InvalidConfig(format!(
                "alpha_min {alpha_min} > alpha_max {alpha_max}"
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let w = weights[i * n + j];
                if !w.is_finite() {
                    return Err(Error::InvalidConfig(format!("non-finite weight at ({i}, {j})")));
                }
                if w != weights[j * n + i] {
                    return Err(Error::InvalidConfig(format!("asymmetric weight at ({i}, {j})")));
                }
                if w < alpha_min || w > alpha_max {
                    return Err(Error::InvalidConfig(format!(
                        "weight {w} at ({i}, {j}) outside [{alpha_min}, {alpha_max}]"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            weights,
            alpha_min,
            alpha_max,
        })
    }

    /// Correlation graphs live on `[0, 2]`.
    pub fn from_similarity(s: &SimilarityMatrix) -> Self {
        Self {
            n: s.n_channels(),
            weights: s.as_slice().to_vec(),
            alpha_min: 0.0,
            alpha_max: 2.0,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }
}

/// Mass assigned to each diagram point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFn {
    /// `omega = 1`.
    #[default]
    Unit,
    /// `omega(b, d) = d - b`.
    Persistence,
}

impl WeightFn {
    pub fn eval(self, birth: f64, death: f64) -> f64 {
        match self {
            WeightFn::Unit => 1.0,
            WeightFn::Persistence => death - birth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub birth: f64,
    pub death: f64,
    pub weight: f64,
}

impl PersistencePoint {
    pub fn new(birth: f64, death: f64, weight: f64) -> Self {
        Self { birth, death, weight }
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.birth
            .total_cmp(&other.birth)
            .then(self.death.total_cmp(&other.death))
            .then(self.weight.total_cmp(&other.weight))
    }
}

/// How classes that survive the whole filtration were turned into points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssentialPolicy {
    pub closed_at: f64,
    pub count: usize,
}

/// A weighted discrete measure on the birth-death half-plane.
///
/// Points are kept sorted by `(birth, death, weight)`, so two diagrams that
/// are equal as multisets compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub order: usize,
    pub points: Vec<PersistencePoint>,
    pub essential: EssentialPolicy,
}

impl PersistenceDiagram {
    pub fn new(order: usize, mut points: Vec<PersistencePoint>) -> Self {
        points.sort_by(PersistencePoint::total_cmp);
        Self {
            order,
            points,
            essential: EssentialPolicy {
                closed_at: f64::NAN,
                count: 0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// `(birth, death)` pairs, ignoring weights.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.birth, p.death)).collect()
    }
}

fn binomial_table(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; k + 1]; n + 1];
    for row in t.iter_mut() {
        row[0] = 1;
    }
    for i in 1..=n {
        for j in 1..=k.min(i) {
            t[i][j] = t[i - 1][j - 1] + t[i - 1][j];
        }
    }
    t
}

/// `C(n, k)` with saturation.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).unwrap_or(usize::MAX)
}

/// All simplices of one dimension, sorted by (filtration value, vertices).
struct SimplexLayer {
    arity: usize,
    verts: Vec<u32>,
    filt: Vec<f64>,
    /// colex rank -> position in sorted order
    position: Vec<u32>,
}

impl SimplexLayer {
    fn build(g: &FilteredGraph, arity: usize, binom: &[Vec<usize>]) -> Self {
        let n = g.n;
        let mut verts: Vec<u32> = Vec::new();
        let mut filt: Vec<f64> = Vec::new();
        let mut stack: Vec<u32> = Vec::with_capacity(arity);
        enumerate(g, arity, 0, g.alpha_min, &mut stack, &mut verts, &mut filt);

        let count = filt.len();
        let mut order: Vec<u32> = (0..count as u32).collect();
        order.sort_by(|&a, &b| {
            let (a, b) = (a as usize, b as usize);
            filt[a]
                .total_cmp(&filt[b])
                .then_with(|| verts[a * arity..(a + 1) * arity].cmp(&verts[b * arity..(b + 1) * arity]))
        });

        let mut sorted_verts = Vec::with_capacity(verts.len());
        let mut sorted_filt = Vec::with_capacity(count);
        let mut position = vec![0u32; binom[n][arity]];
        for (pos, &i) in order.iter().enumerate() {
            let i = i as usize;
            let vs = &verts[i * arity..(i + 1) * arity];
            position[colex_rank(vs, binom)] = pos as u32;
            sorted_verts.extend_from_slice(vs);
            sorted_filt.push(filt[i]);
        }
        Self {
            arity,
            verts: sorted_verts,
            filt: sorted_filt,
            position,
        }
    }

    fn len(&self) -> usize {
        self.filt.len()
    }

    fn vertices(&self, pos: usize) -> &[u32] {
        &self.verts[pos * self.arity..(pos + 1) * self.arity]
    }
}

fn enumerate(
    g: &FilteredGraph,
    arity: usize,
    next: usize,
    current: f64,
    stack: &mut Vec<u32>,
    verts: &mut Vec<u32>,
    filt: &mut Vec<f64>,
) {
    if stack.len() == arity {
        verts.extend_from_slice(stack);
        filt.push(current);
        return;
    }
    let remaining = arity - stack.len();
    for v in next..=(g.n - remaining) {
        let mut f = current;
        for &u in stack.iter() {
            f = f.max(g.weight(u as usize, v));
        }
        stack.push(v as u32);
        enumerate(g, arity, v + 1, f, stack, verts, filt);
        stack.pop();
    }
}

fn colex_rank(sorted: &[u32], binom: &[Vec<usize>]) -> usize {
    sorted.iter().enumerate().map(|(i, &v)| binom[v as usize][i + 1]).sum()
}

/// Symmetric difference of two ascending index lists.
fn xor_into(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

const UNPAIRED: u32 = u32::MAX;

/// Outcome of reducing the boundary columns of one dimension.
struct Reduction {
    /// (face position, column position)
    pairs: Vec<(u32, u32)>,
    /// faces that ended up as a pivot
    pivot_rows: Vec<bool>,
    /// columns that reduced to a nonzero chain
    negative: Vec<bool>,
}

fn reduce(cols: &SimplexLayer, faces: &SimplexLayer, cleared: Option<&[bool]>, binom: &[Vec<usize>]) -> Reduction {
    let mut owner = vec![UNPAIRED; faces.len()];
    let mut stored: Vec<Vec<u32>> = vec![Vec::new(); cols.len()];
    let mut pairs = Vec::new();
    let mut negative = vec![false; cols.len()];
    let mut face_buf: Vec<u32> = Vec::with_capacity(cols.arity - 1);
    let mut col: Vec<u32> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();

    for j in 0..cols.len() {
        if cleared.is_some_and(|c| c[j]) {
            continue;
        }
        col.clear();
        let vs = cols.vertices(j);
        for skip in 0..vs.len() {
            face_buf.clear();
            face_buf.extend(vs.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v));
            col.push(faces.position[colex_rank(&face_buf, binom)]);
        }
        col.sort_unstable();

        while let Some(&pivot) = col.last() {
            let o = owner[pivot as usize];
            if o == UNPAIRED {
                break;
            }
            xor_into(&col, &stored[o as usize], &mut scratch);
            std::mem::swap(&mut col, &mut scratch);
        }
        if let Some(&pivot) = col.last() {
            owner[pivot as usize] = j as u32;
            negative[j] = true;
            pairs.push((pivot, j as u32));
            stored[j] = col.clone();
        }
    }
    let pivot_rows = owner.iter().map(|&o| o != UNPAIRED).collect();
    Reduction {
        pairs,
        pivot_rows,
        negative,
    }
}

/// Persistence diagrams of orders `0..max_order` of the Vietoris-Rips
/// filtration of `g`.
pub fn rips_persistence(g: &FilteredGraph, max_order: usize, weight_fn: WeightFn) -> Result<Vec<PersistenceDiagram>> {
    if max_order == 0 {
        return Err(Error::InvalidConfig("max homology order must be at least 1".into()));
    }
    // order p - 1 needs p-simplices, i.e. p + 1 vertices
    if max_order + 1 > g.n {
        return Err(Error::OrderTooLarge {
            requested: max_order,
            needed: max_order + 1,
            vertices: g.n,
        });
    }
    let binom = binomial_table(g.n, max_order + 1);
    let layers: Vec<SimplexLayer> = (0..=max_order)
        .map(|dim| SimplexLayer::build(g, dim + 1, &binom))
        .collect();

    // reductions[k] reduces the k-simplex columns (k >= 1)
    let mut reductions: Vec<Option<Reduction>> = (0..=max_order).map(|_| None).collect();
    for k in (1..=max_order).rev() {
        let cleared = reductions
            .get(k + 1)
            .and_then(|r| r.as_ref())
            .map(|r| r.pivot_rows.as_slice());
        reductions[k] = Some(reduce(&layers[k], &layers[k - 1], cleared, &binom));
    }

    let mut diagrams = Vec::with_capacity(max_order);
    for order in 0..max_order {
        let faces = &layers[order];
        let killer = &layers[order + 1];
        let red = reductions[order + 1].as_ref().expect("reduced above");
        let mut points = Vec::new();
        for &(f, c) in &red.pairs {
            let birth = faces.filt[f as usize];
            let death = killer.filt[c as usize];
            if birth != death {
                points.push(PersistencePoint::new(birth, death, weight_fn.eval(birth, death)));
            }
        }
        let mut essential = 0;
        for s in 0..faces.len() {
            let positive = order == 0 || !reductions[order].as_ref().expect("reduced above").negative[s];
            if positive && !red.pivot_rows[s] {
                let birth = faces.filt[s];
                if birth != g.alpha_max {
                    points.push(PersistencePoint::new(
                        birth,
                        g.alpha_max,
                        weight_fn.eval(birth, g.alpha_max),
                    ));
                    essential += 1;
                }
            }
        }
        let mut d = PersistenceDiagram::new(order, points);
        d.essential = EssentialPolicy {
            closed_at: g.alpha_max,
            count: essential,
        };
        diagrams.push(d);
    }
    Ok(diagrams)
}

fn linf(a: &PersistencePoint, b: &PersistencePoint) -> f64 {
    (a.birth - b.birth).abs().max((a.death - b.death).abs())
}

/// Kuhn augmenting-path matcher over a dense adjacency predicate.
fn has_perfect_matching(n: usize, adj: &dyn Fn(usize, usize) -> bool) -> bool {
    fn augment(
        u: usize,
        n: usize,
        adj: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        match_right: &mut [usize],
    ) -> bool {
        for v in 0..n {
            if !seen[v] && adj(u, v) {
                seen[v] = true;
                if match_right[v] == usize::MAX || augment(match_right[v], n, adj, seen, match_right) {
                    match_right[v] = u;
                    return true;
                }
            }
        }
        false
    }
    let mut match_right = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    for u in 0..n {
        seen.iter_mut().for_each(|s| *s = false);
        if !augment(u, n, adj, &mut seen, &mut match_right) {
            return false;
        }
    }
    true
}

/// Bottleneck distance (l-infinity ground metric, diagonal allowed).
///
/// Exact: the optimum is one of the pairwise or point-to-diagonal distances,
/// so those candidates are binary-searched with a perfect-matching test on
/// the diagonal-augmented bipartite graph. Point weights are ignored.
pub fn bottleneck_distance(a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<f64> {
    if a.order != b.order {
        return Err(Error::InvalidConfig(format!(
            "bottleneck between orders {} and {}",
            a.order, b.order
        )));
    }
    let (pa, pb) = (&a.points, &b.points);
    let (na, nb) = (pa.len(), pb.len());
    if na + nb > BOTTLENECK_POINT_LIMIT {
        return Err(Error::SizeLimit {
            points: na + nb,
            limit: BOTTLENECK_POINT_LIMIT,
        });
    }
    if na + nb == 0 {
        return Ok(0.0);
    }

    let diag = |p: &PersistencePoint| p.persistence() / 2.0;
    let mut candidates = vec![0.0];
    candidates.extend(pa.iter().map(diag));
    candidates.extend(pb.iter().map(diag));
    for p in pa {
        candidates.extend(pb.iter().map(|q| linf(p, q)));
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let n = na + nb;
    // left: a_0..a_{na-1}, then diagonal images of b; right: b_0.., then diagonal images of a
    let feasible = |delta: f64| {
        let adj = |u: usize, v: usize| -> bool {
            match (u < na, v < nb) {
                (true, true) => linf(&pa[u], &pb[v]) <= delta,
                (true, false) => v - nb == u && diag(&pa[u]) <= delta,
                (false, true) => u - na == v && diag(&pb[v]) <= delta,
                (false, false) => true,
            }
        };
        has_perfect_matching(n, &adj)
    };

    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo])
}

/// Appends `window_index,order,birth,death,weight` rows.
pub fn write_diagram_rows<W: Write>(
    out: &mut W,
    window_index: usize,
    diagrams: &[PersistenceDiagram],
) -> std::io::Result<()> {
    for d in diagrams {
        for p in &d.points {
            writeln!(out, "{window_index},{},{},{},{}", d.order, p.birth, p.death, p.weight)?;
        }
    }
    Ok(())
}

pub const DIAGRAM_CSV_HEADER: &str = "window_index,order,birth,death,weight";
