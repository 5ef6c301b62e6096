//! ATOL quantization: k-means centroids of the empirical mean measure of a
//! sequence of persistence diagrams, in batch (Lloyd on the mean measure) and
//! minibatch (projected, spaced minibatch updates) flavours.

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample_weighted;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Parallelism};
use crate::persistence::PersistenceDiagram;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub point: Point,
    pub mass: f64,
}

fn dist2(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest(centers: &[Point], p: Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &c) in centers.iter().enumerate() {
        let d = dist2(c, p);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// A sequence of discrete planar measures of one homology order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSequence {
    measures: Vec<Vec<Atom>>,
    order: usize,
}

/// Support radius `R`, mass bound `M` and support-size bound `N_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureBounds {
    pub radius: f64,
    pub mass: f64,
    pub support: usize,
}

impl MeasureSequence {
    pub fn new(order: usize, measures: Vec<Vec<Atom>>) -> Self {
        Self { measures, order }
    }

    pub fn from_diagrams(diagrams: &[&PersistenceDiagram]) -> Self {
        let order = diagrams.first().map_or(0, |d| d.order);
        let measures = diagrams
            .iter()
            .map(|d| {
                d.points
                    .iter()
                    .map(|p| Atom {
                        point: [p.birth, p.death],
                        mass: p.weight,
                    })
                    .collect()
            })
            .collect();
        Self { measures, order }
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn measures(&self) -> &[Vec<Atom>] {
        &self.measures
    }

    pub fn bounds(&self) -> MeasureBounds {
        let mut b = MeasureBounds {
            radius: 0.0,
            mass: 0.0,
            support: 0,
        };
        for m in &self.measures {
            b.support = b.support.max(m.len());
            b.mass = b.mass.max(m.iter().map(|a| a.mass).sum());
            for a in m {
                b.radius = b.radius.max(dist2(a.point, [0.0, 0.0]).sqrt());
            }
        }
        b
    }

    /// Empirical mean measure over `measures[range]`, with coincident atoms
    /// merged and atoms sorted by position.
    pub fn mean_over(&self, range: std::ops::Range<usize>) -> Vec<Atom> {
        let n = range.len() as f64;
        let mut atoms: Vec<Atom> = self.measures[range]
            .iter()
            .flatten()
            .filter(|a| a.mass != 0.0)
            .map(|a| Atom {
                point: a.point,
                mass: a.mass / n,
            })
            .collect();
        atoms.sort_by(|a, b| {
            a.point[0]
                .total_cmp(&b.point[0])
                .then(a.point[1].total_cmp(&b.point[1]))
                .then(a.mass.total_cmp(&b.mass))
        });
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.point == a.point => last.mass += a.mass,
                _ => merged.push(a),
            }
        }
        merged
    }

    pub fn mean_measure(&self) -> Vec<Atom> {
        self.mean_over(0..self.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingMode {
    /// Every other minibatch is skipped (groups of four, first and third used).
    Strided,
    /// Consecutive minibatches are used in pairs.
    #[default]
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeConfig {
    pub k: usize,
    /// Batch iteration cap; `None` means `2 * ceil(ln n)`.
    pub t_max: Option<usize>,
    /// Minibatch size; `None` means `ceil(n / 40)`.
    pub minibatch_q: Option<usize>,
    /// Projection radius; `None` means the support radius of the sequence.
    pub r_projection: Option<f64>,
    pub n_start: usize,
    pub seed: u64,
    pub spacing: SpacingMode,
    pub parallelism: Parallelism,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        Self {
            k: 10,
            t_max: None,
            minibatch_q: None,
            r_projection: None,
            n_start: 10,
            seed: 0,
            spacing: SpacingMode::Dense,
            parallelism: Parallelism::default(),
        }
    }
}

impl QuantizeConfig {
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.t_max == Some(0) {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        if self.minibatch_q == Some(0) {
            return Err(Error::InvalidConfig("minibatch size must be at least 1".into()));
        }
        if self.n_start == 0 {
            return Err(Error::InvalidConfig("n_start must be at least 1".into()));
        }
        Ok(())
    }

    /// `2 * ceil(ln n)`, at least 1.
    pub fn batch_iterations(&self, n: usize) -> usize {
        self.t_max
            .unwrap_or_else(|| (2.0 * (n.max(1) as f64).ln().ceil()) as usize)
            .max(1)
    }

    pub fn minibatch_size(&self, n: usize) -> usize {
        self.minibatch_q.unwrap_or_else(|| n.div_ceil(40)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    pub centers: Vec<Point>,
    pub homology_order: usize,
    pub restarts_used: usize,
    pub final_cost: f64,
    /// Support radius of the training sequence.
    pub support_radius: f64,
}

impl CentroidSet {
    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

/// `int min_j |u - c_j|^2 dX(u)` over a list of atoms.
pub fn atoms_cost(atoms: &[Atom], centers: &[Point]) -> f64 {
    atoms
        .iter()
        .map(|a| {
            let d = centers.iter().map(|&c| dist2(c, a.point)).fold(f64::INFINITY, f64::min);
            a.mass * d
        })
        .sum()
}

/// k-means cost of `centers` against the empirical mean measure of `seq`.
pub fn quantization_cost(seq: &MeasureSequence, centers: &[Point]) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    atoms_cost(&seq.mean_measure(), centers)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// `k` distinct atoms drawn without replacement with probability proportional to mass.
fn init_centers(atoms: &[Atom], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let idx = sample_weighted(rng, atoms.len(), |i| atoms[i].mass, k).expect("masses are positive and finite");
    idx.iter().map(|i| atoms[i].point).collect()
}

/// Replaces later duplicates of a center by a fresh support atom not already used.
fn separate_duplicates(centers: &mut [Point], atoms: &[Atom], rng: &mut ChaCha8Rng) -> bool {
    let mut changed = false;
    for j in 1..centers.len() {
        if centers[..j].contains(&centers[j]) {
            let free: Vec<usize> = (0..atoms.len())
                .filter(|&i| !centers.contains(&atoms[i].point))
                .collect();
            if free.is_empty() {
                continue;
            }
            let pick = WeightedIndex::new(free.iter().map(|&i| atoms[i].mass))
                .map(|w| free[w.sample(rng)])
                .unwrap_or(free[0]);
            warn!("duplicate quantization center {j} re-sampled from the support");
            centers[j] = atoms[pick].point;
            changed = true;
        }
    }
    changed
}

/// One Lloyd run on a fixed atom list.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydTrace {
    pub centers: Vec<Point>,
    /// Cost of the initial centers and after every iteration.
    pub costs: Vec<f64>,
    /// Whether iteration `t` (1-based, index `t - 1`) re-sampled an empty cell.
    pub resampled: Vec<bool>,
}

/// Lloyd iterations on the mean measure, starting from `init`.
pub fn lloyd(atoms: &[Atom], init: Vec<Point>, iterations: usize, rng: &mut ChaCha8Rng) -> LloydTrace {
    let k = init.len();
    let mut centers = init;
    let mut costs = vec![atoms_cost(atoms, &centers)];
    let mut resampled = Vec::new();
    let sampler = WeightedIndex::new(atoms.iter().map(|a| a.mass)).expect("positive masses");
    for _ in 0..iterations {
        let mut mass = vec![0.0; k];
        let mut sum = vec![[0.0; 2]; k];
        for a in atoms {
            let j = nearest(&centers, a.point);
            mass[j] += a.mass;
            sum[j][0] += a.mass * a.point[0];
            sum[j][1] += a.mass * a.point[1];
        }
        let mut any_resample = false;
        let next: Vec<Point> = (0..k)
            .map(|j| {
                if mass[j] != 0.0 {
                    [sum[j][0] / mass[j], sum[j][1] / mass[j]]
                } else {
                    any_resample = true;
                    atoms[sampler.sample(rng)].point
                }
            })
            .collect();
        let converged = next == centers;
        centers = next;
        costs.push(atoms_cost(atoms, &centers));
        resampled.push(any_resample);
        if converged {
            break;
        }
    }
    LloydTrace {
        centers,
        costs,
        resampled,
    }
}

fn check_support(atoms: &[Atom], k: usize) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::EmptySequence);
    }
    if k > atoms.len() {
        return Err(Error::KTooLarge {
            k,
            distinct: atoms.len(),
        });
    }
    Ok(())
}

fn best_of(seq: &MeasureSequence, runs: Vec<Vec<Point>>, atoms: &[Atom]) -> CentroidSet {
    let restarts_used = runs.len();
    let (centers, cost) = runs
        .into_iter()
        .map(|c| {
            let cost = atoms_cost(atoms, &c);
            (c, cost)
        })
        .reduce(|best, cand| if cand.1 < best.1 { cand } else { best })
        .expect("at least one restart");
    CentroidSet {
        centers,
        homology_order: seq.order(),
        restarts_used,
        final_cost: cost,
        support_radius: seq.bounds().radius,
    }
}

/// Per-restart traces of the batch algorithm (same runs as [`atol_batch`]).
pub fn atol_batch_traces(seq: &MeasureSequence, cfg: &QuantizeConfig) -> Result<Vec<LloydTrace>> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let atoms = seq.mean_measure();
    check_support(&atoms, cfg.k)?;
    let iterations = cfg.batch_iterations(seq.len());
    Ok(map_indexed(cfg.n_start, cfg.parallelism, |r| {
        let mut rng = restart_rng(cfg.seed, r);
        let init = init_centers(&atoms, cfg.k, &mut rng);
        let mut trace = lloyd(&atoms, init, iterations, &mut rng);
        separate_duplicates(&mut trace.centers, &atoms, &mut rng);
        trace
    }))
}

/// Batch ATOL: best (lowest cost) of `n_start` Lloyd runs on the mean measure.
pub fn atol_batch(seq: &MeasureSequence, cfg: &QuantizeConfig) -> Result<CentroidSet> {
    let traces = atol_batch_traces(seq, cfg)?;
    let atoms = seq.mean_measure();
    Ok(best_of(seq, traces.into_iter().map(|t| t.centers).collect(), &atoms))
}

fn project(p: Point, radius: f64) -> Point {
    let norm = dist2(p, [0.0, 0.0]).sqrt();
    if norm > radius && norm > 0.0 {
        [p[0] * radius / norm, p[1] * radius / norm]
    } else {
        p
    }
}

/// One minibatch update: cell masses from `mass_batch`, barycenter numerators
/// from `numerator_batch`, result projected onto the ball of radius `radius`.
/// Centers whose cell is empty in `mass_batch` are kept.
pub fn minibatch_step(
    centers: &[Point],
    mass_batch: &[Vec<Atom>],
    numerator_batch: &[Vec<Atom>],
    radius: f64,
) -> Vec<Point> {
    let k = centers.len();
    let mut mass = vec![0.0; k];
    let qm = mass_batch.len() as f64;
    for a in mass_batch.iter().flatten() {
        mass[nearest(centers, a.point)] += a.mass / qm;
    }
    let mut num = vec![[0.0; 2]; k];
    let qn = numerator_batch.len() as f64;
    for a in numerator_batch.iter().flatten() {
        let j = nearest(centers, a.point);
        num[j][0] += a.mass * a.point[0] / qn;
        num[j][1] += a.mass * a.point[1] / qn;
    }
    (0..k)
        .map(|j| {
            if mass[j] != 0.0 {
                project([num[j][0] / mass[j], num[j][1] / mass[j]], radius)
            } else {
                centers[j]
            }
        })
        .collect()
}

/// Minibatch ATOL. Strided spacing uses batches `4t` and `4t + 2` of each
/// group of four; dense spacing uses consecutive pairs `2t`, `2t + 1`.
pub fn atol_minibatch(seq: &MeasureSequence, cfg: &QuantizeConfig) -> Result<CentroidSet> {
    cfg.validate()?;
    let n = seq.len();
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let q = cfg.minibatch_size(n);
    let group = match cfg.spacing {
        SpacingMode::Strided => 4,
        SpacingMode::Dense => 2,
    };
    if n < group * q {
        return Err(Error::TooFewMeasures {
            have: n,
            need: group * q,
        });
    }
    let atoms = seq.mean_measure();
    check_support(&atoms, cfg.k)?;
    let radius = cfg.r_projection.unwrap_or_else(|| seq.bounds().radius);
    let steps = n / (group * q);
    let (mass_offset, num_offset) = match cfg.spacing {
        SpacingMode::Strided => (0, 2),
        SpacingMode::Dense => (0, 1),
    };
    let batch = |b: usize| &seq.measures()[b * q..(b + 1) * q];

    let runs = map_indexed(cfg.n_start, cfg.parallelism, |r| {
        let mut rng = restart_rng(cfg.seed, r);
        let mut centers: Vec<Point> = init_centers(&atoms, cfg.k, &mut rng)
            .into_iter()
            .map(|c| project(c, radius))
            .collect();
        for t in 0..steps {
            centers = minibatch_step(
                &centers,
                batch(group * t + mass_offset),
                batch(group * t + num_offset),
                radius,
            );
        }
        if separate_duplicates(&mut centers, &atoms, &mut rng) {
            centers.iter_mut().for_each(|c| *c = project(*c, radius));
        }
        centers
    });
    Ok(best_of(seq, runs, &atoms))
}
