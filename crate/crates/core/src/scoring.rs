//! Normal-regime model and Mahalanobis-type anomaly scores.
//!
//! The location/scatter pair is either the plain sample mean and biased
//! covariance, or a Minimum Covariance Determinant estimate approximated by
//! random elemental starts followed by concentration steps. Scores use
//! `(sigma + lambda I)^-1`; `lambda` is a small trace-relative ridge so that
//! constant embedding coordinates do not make the inverse blow up.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Parallelism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Plain,
    #[default]
    Mcd,
}

/// Diagonal loading applied before inverting the scatter matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `max(scale * trace / dim, floor)`, escalated tenfold while the
    /// Cholesky factorization fails.
    Relative { scale: f64, floor: f64 },
    /// Exactly this value; a failed factorization is an error.
    Fixed(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative {
            scale: 1e-9,
            floor: 1e-12,
        }
    }
}

const MAX_RIDGE_ESCALATIONS: usize = 30;

fn factorize(sigma: &DMatrix<f64>, ridge: Ridge) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let dim = sigma.nrows();
    let loaded = |lambda: f64| {
        let mut m = sigma.clone();
        for i in 0..dim {
            m[(i, i)] += lambda;
        }
        Cholesky::new(m)
    };
    match ridge {
        Ridge::Fixed(lambda) => loaded(lambda)
            .map(|c| (c, lambda))
            .ok_or_else(|| Error::DegenerateCovariance(format!("scatter + {lambda} I is not positive definite"))),
        Ridge::Relative { scale, floor } => {
            let mut lambda = (scale * sigma.trace() / dim as f64).max(floor);
            for _ in 0..MAX_RIDGE_ESCALATIONS {
                if let Some(c) = loaded(lambda) {
                    return Ok((c, lambda));
                }
                lambda *= 10.0;
            }
            Err(Error::DegenerateCovariance(
                "scatter matrix not repairable by diagonal loading".into(),
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreModel {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    lambda: f64,
    chol: Cholesky<f64, Dyn>,
    pub h: f64,
    pub estimator: Estimator,
    pub c0: f64,
}

impl PartialEq for ScoreModel {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu
            && self.sigma == other.sigma
            && self.lambda == other.lambda
            && self.h == other.h
            && self.estimator == other.estimator
            && self.c0 == other.c0
    }
}

impl ScoreModel {
    /// Builds a model from a location vector and a scatter matrix.
    pub fn from_moments(mu: DVector<f64>, sigma: DMatrix<f64>, ridge: Ridge) -> Result<Self> {
        let dim = mu.len();
        if dim == 0 || sigma.nrows() != dim || sigma.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "location of length {dim} with a {}x{} scatter",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCovariance("non-finite moments".into()));
        }
        let (chol, lambda) = factorize(&sigma, ridge)?;
        Ok(Self {
            mu,
            sigma,
            lambda,
            chol,
            h: 0.0,
            estimator: Estimator::Plain,
            c0: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Ridge actually applied.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a model of dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `s(v) = sqrt((v - mu)^T (sigma + lambda I)^-1 (v - mu))`.
    pub fn score(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        let mut centered = DVector::from_column_slice(v) - &self.mu;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut centered);
        Ok(centered.norm())
    }

    /// Per-coordinate standardized deviations `|v_i - mu_i| / sqrt(sigma_ii + lambda)`.
    pub fn center_scores(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        Ok(v.iter()
            .enumerate()
            .map(|(i, &x)| (x - self.mu[i]).abs() / (self.sigma[(i, i)] + self.lambda).sqrt())
            .collect())
    }
}

fn to_matrix(vectors: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = vectors.len();
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::DimensionMismatch("empty embedding vectors".into()));
    }
    if let Some(i) = vectors.iter().position(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "vector {i} has length {}, expected {dim}",
            vectors[i].len()
        )));
    }
    Ok(DMatrix::from_fn(n, dim, |i, j| vectors[i][j]))
}

/// Mean and biased (`1/|I|`) covariance of the selected rows.
fn subset_moments(x: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = x.ncols();
    let m = rows.len() as f64;
    let mut mean = DVector::zeros(dim);
    for &r in rows {
        mean += x.row(r).transpose();
    }
    mean /= m;
    let mut centered = DMatrix::zeros(rows.len(), dim);
    for (k, &r) in rows.iter().enumerate() {
        let row = x.row(r).transpose() - &mean;
        centered.set_row(k, &row.transpose());
    }
    let cov = centered.tr_mul(&centered) / m;
    (mean, cov)
}

pub fn fit_plain(vectors: &[Vec<f64>]) -> Result<ScoreModel> {
    fit_plain_with(vectors, Ridge::default())
}

pub fn fit_plain_with(vectors: &[Vec<f64>], ridge: Ridge) -> Result<ScoreModel> {
    if vectors.len() < 2 {
        return Err(Error::TooFewSamples {
            have: vectors.len(),
            need: 2,
        });
    }
    let x = to_matrix(vectors)?;
    let all: Vec<usize> = (0..x.nrows()).collect();
    let (mu, sigma) = subset_moments(&x, &all);
    ScoreModel::from_moments(mu, sigma, ridge)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McdConfig {
    pub n_starts: usize,
    /// Concentration steps applied to every start before ranking.
    pub initial_csteps: usize,
    /// Number of best starts iterated to convergence.
    pub n_refine: usize,
    pub max_csteps: usize,
    /// Convergence threshold on the change of log-determinant.
    pub tol: f64,
    pub c0: f64,
    pub seed: u64,
    pub ridge: Ridge,
    pub parallelism: Parallelism,
}

impl Default for McdConfig {
    fn default() -> Self {
        Self {
            n_starts: 50,
            initial_csteps: 2,
            n_refine: 2,
            max_csteps: 100,
            tol: 1e-9,
            c0: 1.0,
            seed: 0,
            ridge: Ridge::default(),
            parallelism: Parallelism::default(),
        }
    }
}

/// Size `ceil(n (1 - h))` of the MCD subset.
pub fn mcd_subset_size(n: usize, h: f64) -> usize {
    ((n as f64 * (1.0 - h)) - 1e-9).ceil().max(0.0) as usize
}

struct Candidate {
    rows: Vec<usize>,
    logdet: f64,
}

fn logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Concentration step: keep the `size` rows closest to the current fit.
fn c_step(x: &DMatrix<f64>, rows: &[usize], size: usize, ridge: Ridge) -> Result<Candidate> {
    let (mean, cov) = subset_moments(x, rows);
    let (chol, _) = factorize(&cov, ridge)?;
    let l = chol.l_dirty();
    let mut dist: Vec<(f64, usize)> = (0..x.nrows())
        .map(|i| {
            let mut c = x.row(i).transpose() - &mean;
            l.solve_lower_triangular_mut(&mut c);
            (c.norm_squared(), i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut next: Vec<usize> = dist[..size].iter().map(|d| d.1).collect();
    next.sort_unstable();
    let (_, next_cov) = subset_moments(x, &next);
    let (next_chol, _) = factorize(&next_cov, ridge)?;
    Ok(Candidate {
        rows: next,
        logdet: logdet(&next_chol),
    })
}

fn concentrate(x: &DMatrix<f64>, mut cand: Candidate, size: usize, steps: usize, cfg: &McdConfig) -> Result<Candidate> {
    for _ in 0..steps {
        let next = c_step(x, &cand.rows, size, cfg.ridge)?;
        let done = next.rows == cand.rows || (cand.logdet - next.logdet).abs() < cfg.tol;
        cand = next;
        if done {
            break;
        }
    }
    Ok(cand)
}

/// Fast-MCD style fit with contamination fraction `h`.
pub fn fit_mcd(vectors: &[Vec<f64>], h: f64, cfg: &McdConfig) -> Result<ScoreModel> {
    if !(0.0..1.0).contains(&h) {
        return Err(Error::InvalidConfig(format!("contamination h = {h} outside [0, 1)")));
    }
    let x = to_matrix(vectors)?;
    let (n, dim) = (x.nrows(), x.ncols());
    let size = mcd_subset_size(n, h);
    if size < dim + 1 || n < 2 {
        return Err(Error::TooFewSamples {
            have: size,
            need: dim + 1,
        });
    }

    let (mu, sigma) = if size >= n {
        let all: Vec<usize> = (0..n).collect();
        subset_moments(&x, &all)
    } else {
        let starts = map_indexed(cfg.n_starts.max(1), cfg.parallelism, |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            let mut elemental = sample(&mut rng, n, (dim + 1).min(n)).into_vec();
            elemental.sort_unstable();
            let first = c_step(&x, &elemental, size, cfg.ridge)?;
            concentrate(&x, first, size, cfg.initial_csteps.saturating_sub(1), cfg)
        });
        let mut ok: Vec<Candidate> = starts.into_iter().filter_map(|r| r.ok()).collect();
        if ok.is_empty() {
            return Err(Error::DegenerateCovariance(
                "every MCD start produced a singular subset".into(),
            ));
        }
        ok.sort_by(|a, b| a.logdet.total_cmp(&b.logdet));
        ok.truncate(cfg.n_refine.max(1));
        let refined = map_indexed(ok.len(), cfg.parallelism, |i| {
            let c = Candidate {
                rows: ok[i].rows.clone(),
                logdet: ok[i].logdet,
            };
            concentrate(&x, c, size, cfg.max_csteps, cfg)
        });
        let best = refined
            .into_iter()
            .filter_map(|r| r.ok())
            .reduce(|a, b| if b.logdet < a.logdet { b } else { a })
            .ok_or_else(|| Error::DegenerateCovariance("MCD refinement failed".into()))?;
        subset_moments(&x, &best.rows)
    };
    let mut model = ScoreModel::from_moments(mu, sigma * cfg.c0, cfg.ridge)?;
    model.h = h;
    model.estimator = Estimator::Mcd;
    model.c0 = cfg.c0;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub t_hat: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl Threshold {
    pub fn is_anomalous(&self, score: f64) -> bool {
        score > self.t_hat
    }
}

/// Smallest `delta` for which the type-I guarantee applies:
/// `5 sqrt(alpha) sqrt(ln(n) / (n / q))`.
pub fn min_delta(alpha: f64, n: usize, q: usize) -> f64 {
    let n = n as f64;
    5.0 * alpha.sqrt() * (n.ln() / (n / q as f64)).sqrt()
}

/// Smallest observed score whose empirical exceedance fraction is at most
/// `alpha - delta`.
pub fn calibrate_threshold(scores: &[f64], alpha: f64, delta: f64) -> Result<Threshold> {
    if !(0.0 < delta && delta < alpha && alpha < 1.0) {
        return Err(Error::InvalidLevel { alpha, delta });
    }
    if scores.is_empty() {
        return Err(Error::TooFewSamples { have: 0, need: 1 });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("non-finite score".into()));
    }
    let n = scores.len();
    let bound = min_delta(alpha, n, 1);
    if bound > delta {
        warn!("delta = {delta} is below the advisory bound {bound:.4} for n = {n} (q = 1)");
    }
    let level = alpha - delta;
    let allowed = (level * n as f64 + 1e-9).floor() as usize;

    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    // exceedances of sorted[i] = number of entries strictly greater
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if n - (j + 1) <= allowed {
            return Ok(Threshold {
                t_hat: sorted[i],
                alpha,
                delta,
            });
        }
        i = j + 1;
    }
    unreachable!("the maximum has zero exceedances")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(mu: &[f64], sigma: &[f64]) -> ScoreModel {
        let d = mu.len();
        ScoreModel::from_moments(
            DVector::from_column_slice(mu),
            DMatrix::from_row_slice(d, d, sigma),
            Ridge::Fixed(0.0),
        )
        .unwrap()
    }

    #[test]
    fn plain_moments() {
        let m = fit_plain(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(m.mu().as_slice(), &[1.0, 1.0]);
        assert_eq!(m.sigma(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(m.lambda() > 0.0);
    }

    #[test]
    fn plain_identical_vectors_regularized() {
        let m = fit_plain(&vec![vec![3.0, -1.0]; 5]).unwrap();
        assert_eq!(m.sigma(), &DMatrix::zeros(2, 2));
        assert_eq!(m.lambda(), 1e-12);
        assert_eq!(m.score(&[3.0, -1.0]).unwrap(), 0.0);
        assert!(m.score(&[3.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn plain_scaled_identity_rows() {
        // rows of sqrt(2) I_3 plus their negatives are centered; covariance is (2/3) I
        let s = 2f64.sqrt();
        let mut rows = Vec::new();
        for i in 0..3 {
            let mut r = vec![0.0; 3];
            r[i] = s;
            rows.push(r.clone());
            r[i] = -s;
            rows.push(r);
        }
        let m = fit_plain(&rows).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 2.0 / 3.0 } else { 0.0 };
                assert!((m.sigma()[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(fit_plain(&[vec![1.0]]), Err(Error::TooFewSamples { .. })));
        assert!(matches!(
            fit_mcd(
                &[vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 0.0]],
                0.5,
                &McdConfig::default()
            ),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn score_examples() {
        let m = exact(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.score(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((m.score(&[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-12);
        let m = exact(&[0.0, 0.0], &[4.0, 0.0, 0.0, 1.0]);
        assert!((m.score(&[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(m.score(&[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn center_score_examples() {
        let m = exact(&[0.0, 0.0], &[4.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.center_scores(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.center_scores(&[2.0, 3.0]).unwrap(), vec![1.0, 3.0]);
        let doubled = exact(&[0.0, 0.0], &[8.0, 0.0, 0.0, 2.0]);
        let a = m.center_scores(&[2.0, 3.0]).unwrap();
        let b = doubled.center_scores(&[2.0, 3.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x / 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn mcd_rejects_far_point() {
        let data: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 0.0, 100.0].iter().map(|&v| vec![v]).collect();
        let m = fit_mcd(&data, 0.2, &McdConfig::default()).unwrap();
        assert_eq!(m.mu()[0], 0.0);
        assert_eq!(m.estimator, Estimator::Mcd);
    }

    #[test]
    fn mcd_without_contamination_is_plain() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let plain = fit_plain(&data).unwrap();
        let mcd = fit_mcd(&data, 0.0, &McdConfig::default()).unwrap();
        assert_eq!(plain.mu(), mcd.mu());
        assert_eq!(plain.sigma(), mcd.sigma());
    }

    #[test]
    fn subset_size_rounding() {
        assert_eq!(mcd_subset_size(5, 0.2), 4);
        assert_eq!(mcd_subset_size(991, 0.1), 892);
        assert_eq!(mcd_subset_size(10, 0.0), 10);
    }

    #[test]
    fn threshold_examples() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = calibrate_threshold(&scores, 0.2, 0.1).unwrap();
        assert_eq!(t.t_hat, 90.0);
        assert!(calibrate_threshold(&scores, 1.0, 0.0).is_err());
        assert!(calibrate_threshold(&scores, 1.5, 0.25).is_err());
        assert!(calibrate_threshold(&scores, 0.1, 0.2).is_err());
        let flat = vec![3.5; 40];
        assert_eq!(calibrate_threshold(&flat, 0.05, 0.025).unwrap().t_hat, 3.5);
    }

    #[test]
    fn min_delta_formula() {
        let b = min_delta(0.05, 1000, 10);
        let expected = 5.0 * 0.05f64.sqrt() * (1000f64.ln() / 100.0).sqrt();
        assert_eq!(b, expected);
    }
}
