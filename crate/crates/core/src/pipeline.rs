//! End-to-end fit and score, window reversing, model files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{try_map_indexed, Parallelism};
use crate::persistence::{rips_persistence, FilteredGraph, PersistenceDiagram, WeightFn};
use crate::quantization::{
    atol_batch, atol_minibatch, CentroidSet, MeasureSequence, Point, QuantizeConfig, SpacingMode,
};
use crate::scoring::{
    calibrate_threshold, fit_mcd, fit_plain_with, Estimator, McdConfig, Ridge, ScoreModel, Threshold,
};
use crate::timeseries::{similarity, slice_windows, TimeSeries, WindowConfig};
use crate::vectorization::Vectorizer;

/// Current model file format.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantizer {
    #[default]
    Batch,
    Minibatch,
}

/// Calibration levels for the optional decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdLevel {
    pub alpha: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TadaConfig {
    pub window: WindowConfig,
    /// Centroids per homology order.
    pub k: usize,
    /// Orders `0..max_order` are used.
    pub max_order: usize,
    pub n_start: usize,
    /// MCD contamination.
    pub h: f64,
    pub seed: u64,
    pub quantizer: Quantizer,
    pub minibatch_q: Option<usize>,
    pub spacing: SpacingMode,
    pub t_max: Option<usize>,
    pub weight_fn: WeightFn,
    pub estimator: Estimator,
    pub threshold: Option<ThresholdLevel>,
    pub mcd_starts: usize,
    pub parallelism: Parallelism,
}

impl Default for TadaConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            k: 10,
            max_order: 2,
            n_start: 10,
            h: 0.1,
            seed: 0,
            quantizer: Quantizer::Batch,
            minibatch_q: None,
            spacing: SpacingMode::Dense,
            t_max: None,
            weight_fn: WeightFn::Unit,
            estimator: Estimator::Mcd,
            threshold: None,
            mcd_starts: 50,
            parallelism: Parallelism::default(),
        }
    }
}

/// Settings recorded alongside a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    pub k: usize,
    pub n_start: usize,
    pub quantizer: Quantizer,
    pub minibatch_q: Option<usize>,
    pub spacing: SpacingMode,
    pub t_max: Option<usize>,
    pub mcd_starts: usize,
}

impl Provenance {
    fn from_config(cfg: &TadaConfig) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            k: cfg.k,
            n_start: cfg.n_start,
            quantizer: cfg.quantizer,
            minibatch_q: cfg.minibatch_q,
            spacing: cfg.spacing,
            t_max: cfg.t_max,
            mcd_starts: cfg.mcd_starts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TadaModel {
    pub window: WindowConfig,
    pub max_order: usize,
    pub n_channels: usize,
    pub weight_fn: WeightFn,
    /// One per order; an order without mass has no centers.
    pub vectorizers: Vec<Vectorizer>,
    pub score_model: ScoreModel,
    pub threshold: Option<Threshold>,
    pub seed: u64,
    pub provenance: Provenance,
}

impl TadaModel {
    pub fn embedding_dim(&self) -> usize {
        self.vectorizers.iter().map(Vectorizer::dim).sum()
    }

    /// Concatenated per-order embedding of one window.
    pub fn embed(&self, diagrams: &[PersistenceDiagram]) -> Vec<f64> {
        let mut out = vec![0.0; self.embedding_dim()];
        let mut at = 0;
        for (v, d) in self.vectorizers.iter().zip(diagrams) {
            v.vectorize_into(d, &mut out[at..at + v.dim()]);
            at += v.dim();
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile::from_model(self);
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter::new());
        file.serialize(&mut ser)
            .map_err(|e| Error::CorruptModel(e.to_string()))?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            version: u32,
        }
        if let Ok(p) = serde_json::from_str::<Probe>(text) {
            if p.version > FORMAT_VERSION {
                return Err(Error::VersionMismatch {
                    found: p.version,
                    supported: FORMAT_VERSION,
                });
            }
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        file.into_model()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub window_scores: Vec<f64>,
    pub timestamp_scores: Vec<f64>,
}

/// Diagnostics from [`fit_with_report`].
#[derive(Debug, Clone)]
pub struct FitReport {
    pub n_windows: usize,
    pub centroids: Vec<CentroidSet>,
    /// Training windows scored by the fitted model.
    pub window_scores: Vec<f64>,
    pub timings: Vec<(&'static str, Duration)>,
}

/// Diagrams of orders `0..max_order` for every window, indexed
/// `[window][order]`.
pub fn compute_diagrams(
    ts: &TimeSeries,
    window: &WindowConfig,
    max_order: usize,
    weight_fn: WeightFn,
    parallelism: Parallelism,
) -> Result<Vec<Vec<PersistenceDiagram>>> {
    ts.check_usable()?;
    let ranges = slice_windows(ts.len(), window)?;
    let out = try_map_indexed(ranges.len(), parallelism, |w| {
        let s = similarity(ts, ranges[w].clone(), w)?;
        let g = FilteredGraph::from_similarity(&s);
        rips_persistence(&g, max_order, weight_fn).map(|d| (d, s.degenerate_channels))
    })?;
    let degenerate = out.iter().filter(|(_, d)| *d > 0).count();
    if degenerate > 0 {
        warn!("{degenerate} window(s) contain constant channels; their correlations are set to 0");
    }
    Ok(out.into_iter().map(|(d, _)| d).collect())
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream + 1)
}

fn quantize_order(diagrams: &[Vec<PersistenceDiagram>], order: usize, cfg: &TadaConfig) -> Result<CentroidSet> {
    let per_window: Vec<&PersistenceDiagram> = diagrams.iter().map(|d| &d[order]).collect();
    let seq = MeasureSequence::from_diagrams(&per_window);
    let distinct = seq.mean_measure().len();
    if distinct == 0 {
        warn!("homology order {order} has no mass in any training window; it is left out of the embedding");
        return Ok(CentroidSet {
            centers: Vec::new(),
            homology_order: order,
            restarts_used: 0,
            final_cost: 0.0,
            support_radius: 0.0,
        });
    }
    let k = cfg.k.min(distinct);
    if k < cfg.k {
        warn!("homology order {order} has only {distinct} distinct points; using {k} centroids");
    }
    let qcfg = QuantizeConfig {
        k,
        t_max: cfg.t_max,
        minibatch_q: cfg.minibatch_q,
        r_projection: None,
        n_start: cfg.n_start,
        seed: sub_seed(cfg.seed, order as u64),
        spacing: cfg.spacing,
        parallelism: cfg.parallelism,
    };
    match cfg.quantizer {
        Quantizer::Batch => atol_batch(&seq, &qcfg),
        Quantizer::Minibatch => atol_minibatch(&seq, &qcfg),
    }
}

pub fn fit(ts: &TimeSeries, cfg: &TadaConfig) -> Result<TadaModel> {
    fit_with_report(ts, cfg).map(|(m, _)| m)
}

pub fn fit_with_report(ts: &TimeSeries, cfg: &TadaConfig) -> Result<(TadaModel, FitReport)> {
    if cfg.k == 0 || cfg.n_start == 0 {
        return Err(Error::InvalidConfig("k and n_start must be at least 1".into()));
    }
    let n = cfg.window.window_count(ts.len())?;
    if n < 2 {
        return Err(Error::TooFewWindows { have: n, need: 2 });
    }
    let mut timings = Vec::new();

    let clock = Instant::now();
    let diagrams = compute_diagrams(ts, &cfg.window, cfg.max_order, cfg.weight_fn, cfg.parallelism)?;
    timings.push(("diagrams", clock.elapsed()));

    let clock = Instant::now();
    let centroids = (0..cfg.max_order)
        .map(|o| quantize_order(&diagrams, o, cfg))
        .collect::<Result<Vec<_>>>()?;
    let vectorizers = centroids
        .iter()
        .map(Vectorizer::from_centroids)
        .collect::<Result<Vec<_>>>()?;
    timings.push(("quantization", clock.elapsed()));

    let clock = Instant::now();
    let dim: usize = vectorizers.iter().map(Vectorizer::dim).sum();
    if dim == 0 {
        return Err(Error::DegenerateCovariance(
            "no homology order carries mass; the embedding is empty".into(),
        ));
    }
    let mut model = TadaModel {
        window: cfg.window,
        max_order: cfg.max_order,
        n_channels: ts.n_channels(),
        weight_fn: cfg.weight_fn,
        vectorizers,
        // replaced below once the embeddings exist
        score_model: ScoreModel::from_moments(DVector::zeros(dim), DMatrix::identity(dim, dim), Ridge::Fixed(0.0))?,
        threshold: None,
        seed: cfg.seed,
        provenance: Provenance::from_config(cfg),
    };
    let embeddings: Vec<Vec<f64>> = diagrams.iter().map(|d| model.embed(d)).collect();
    timings.push(("vectorization", clock.elapsed()));

    let clock = Instant::now();
    model.score_model = match cfg.estimator {
        Estimator::Plain => fit_plain_with(&embeddings, Ridge::default())?,
        Estimator::Mcd => fit_mcd(
            &embeddings,
            cfg.h,
            &McdConfig {
                n_starts: cfg.mcd_starts,
                seed: sub_seed(cfg.seed, cfg.max_order as u64),
                parallelism: cfg.parallelism,
                ..McdConfig::default()
            },
        )?,
    };
    let window_scores = embeddings
        .iter()
        .map(|v| model.score_model.score(v))
        .collect::<Result<Vec<_>>>()?;
    if let Some(level) = cfg.threshold {
        model.threshold = Some(calibrate_threshold(&window_scores, level.alpha, level.delta)?);
    }
    timings.push(("scoring", clock.elapsed()));

    info!(
        "fitted {n} windows, embedding dimension {dim}, lambda {:.3e}",
        model.score_model.lambda()
    );
    let report = FitReport {
        n_windows: n,
        centroids,
        window_scores,
        timings,
    };
    Ok((model, report))
}

fn check_channels(model: &TadaModel, ts: &TimeSeries) -> Result<()> {
    if ts.n_channels() != model.n_channels {
        return Err(Error::ChannelMismatch {
            expected: model.n_channels,
            found: ts.n_channels(),
        });
    }
    Ok(())
}

/// Per-window embeddings of `ts` under `model`.
pub fn embed_series(model: &TadaModel, ts: &TimeSeries, parallelism: Parallelism) -> Result<Vec<Vec<f64>>> {
    check_channels(model, ts)?;
    let diagrams = compute_diagrams(ts, &model.window, model.max_order, model.weight_fn, parallelism)?;
    Ok(diagrams.iter().map(|d| model.embed(d)).collect())
}

/// Adds each window score to every timestamp the window covers.
pub fn reverse_windows(window_scores: &[f64], len: usize, window: &WindowConfig) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (w, s) in window_scores.iter().enumerate() {
        let start = w * window.stride;
        for slot in &mut out[start..(start + window.delta).min(len)] {
            *slot += s;
        }
    }
    if let Some(n) = window_scores.len().checked_sub(1) {
        let covered = n * window.stride + window.delta;
        if covered < len {
            warn!(
                "the last {} timestamps are not covered by any window and score 0",
                len - covered
            );
        }
    }
    out
}

pub fn score_series(model: &TadaModel, ts: &TimeSeries) -> Result<ScoreSeries> {
    score_series_with(model, ts, Parallelism::default())
}

pub fn score_series_with(model: &TadaModel, ts: &TimeSeries, parallelism: Parallelism) -> Result<ScoreSeries> {
    let embeddings = embed_series(model, ts, parallelism)?;
    let window_scores = embeddings
        .iter()
        .map(|v| model.score_model.score(v))
        .collect::<Result<Vec<_>>>()?;
    let timestamp_scores = reverse_windows(&window_scores, ts.len(), &model.window);
    Ok(ScoreSeries {
        window_scores,
        timestamp_scores,
    })
}

/// Per-window center-targeted scores, one row per window.
pub fn window_center_scores(model: &TadaModel, embeddings: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    embeddings.iter().map(|v| model.score_model.center_scores(v)).collect()
}

pub fn save_model(model: &TadaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TadaModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TadaModel::from_json(&text)
}

/// `timestamp_index,score` rows.
pub fn write_scores_csv<W: Write>(out: &mut W, scores: &[f64]) -> io::Result<()> {
    writeln!(out, "timestamp_index,score")?;
    for (t, s) in scores.iter().enumerate() {
        writeln!(out, "{t},{s}")?;
    }
    Ok(())
}

/// `window_index,window_score[,center_0,...]` rows.
pub fn write_window_csv<W: Write>(
    out: &mut W,
    window_scores: &[f64],
    center_scores: Option<&[Vec<f64>]>,
) -> io::Result<()> {
    write!(out, "window_index,window_score")?;
    let width = center_scores.and_then(|c| c.first()).map_or(0, Vec::len);
    for j in 0..width {
        write!(out, ",center_{j}")?;
    }
    writeln!(out)?;
    for (w, s) in window_scores.iter().enumerate() {
        write!(out, "{w},{s}")?;
        if let Some(c) = center_scores {
            for v in &c[w] {
                write!(out, ",{v}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    window: WindowConfig,
    orders: usize,
    n_channels: usize,
    weight: WeightFn,
    centers: Vec<Vec<Point>>,
    bandwidths: Vec<Vec<f64>>,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    lambda: f64,
    h: f64,
    c0: f64,
    estimator: Estimator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<Threshold>,
    seed: u64,
    provenance: Provenance,
}

impl ModelFile {
    fn from_model(m: &TadaModel) -> Self {
        let sm = &m.score_model;
        let sigma = sm.sigma();
        Self {
            version: FORMAT_VERSION,
            window: m.window,
            orders: m.max_order,
            n_channels: m.n_channels,
            weight: m.weight_fn,
            centers: m.vectorizers.iter().map(|v| v.centers.clone()).collect(),
            bandwidths: m.vectorizers.iter().map(|v| v.bandwidths.clone()).collect(),
            mu: sm.mu().iter().copied().collect(),
            sigma: (0..sigma.nrows())
                .map(|i| sigma.row(i).iter().copied().collect())
                .collect(),
            lambda: sm.lambda(),
            h: sm.h,
            c0: sm.c0,
            estimator: sm.estimator,
            threshold: m.threshold,
            seed: m.seed,
            provenance: m.provenance.clone(),
        }
    }

    fn into_model(self) -> Result<TadaModel> {
        let corrupt = |msg: String| Error::CorruptModel(msg);
        if self.version == 0 {
            return Err(corrupt("format version 0".into()));
        }
        if self.centers.len() != self.orders || self.bandwidths.len() != self.orders {
            return Err(corrupt(format!(
                "{} center lists and {} bandwidth lists for {} orders",
                self.centers.len(),
                self.bandwidths.len(),
                self.orders
            )));
        }
        let vectorizers: Vec<Vectorizer> = self
            .centers
            .into_iter()
            .zip(self.bandwidths)
            .enumerate()
            .map(|(order, (centers, bandwidths))| {
                if centers.len() != bandwidths.len() {
                    return Err(corrupt(format!("order {order}: center and bandwidth counts differ")));
                }
                Ok(Vectorizer {
                    centers,
                    bandwidths,
                    homology_order: order,
                })
            })
            .collect::<Result<_>>()?;
        let dim = self.mu.len();
        let total: usize = vectorizers.iter().map(Vectorizer::dim).sum();
        if total != dim || self.sigma.len() != dim || self.sigma.iter().any(|r| r.len() != dim) {
            return Err(corrupt(format!(
                "embedding dimension {total} does not match location/scatter of size {dim}"
            )));
        }
        let sigma = DMatrix::from_fn(dim, dim, |i, j| self.sigma[i][j]);
        let mut score_model = ScoreModel::from_moments(DVector::from_vec(self.mu), sigma, Ridge::Fixed(self.lambda))?;
        score_model.h = self.h;
        score_model.c0 = self.c0;
        score_model.estimator = self.estimator;
        Ok(TadaModel {
            window: self.window,
            max_order: self.orders,
            n_channels: self.n_channels,
            weight_fn: self.weight,
            vectorizers,
            score_model,
            threshold: self.threshold,
            seed: self.seed,
            provenance: self.provenance,
        })
    }
}

/// Pretty JSON with every float written as `±d.dddddddddddddddde±ddd`, so a
/// file's size depends only on its shape and floats round-trip exactly.
struct FixedFloatFormatter<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

impl FixedFloatFormatter<'_> {
    fn new() -> Self {
        Self {
            inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
        }
    }
}

pub(crate) fn fixed_width_float(v: f64) -> String {
    if !v.is_finite() {
        // serde_json would write null; keep the same
        return "null".into();
    }
    let s = format!("{:.16e}", v.abs());
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if v.is_sign_negative() { '-' } else { ' ' };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mantissa}e{esign}{:03}", exp.abs())
}

impl serde_json::ser::Formatter for FixedFloatFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fixed_width_float(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_ar1_pointanomaly, Ar1Spec};

    fn small_config() -> TadaConfig {
        TadaConfig {
            window: WindowConfig::new(50, 10),
            k: 3,
            n_start: 3,
            mcd_starts: 10,
            ..TadaConfig::default()
        }
    }

    fn series(seed: u64, length: usize) -> TimeSeries {
        generate_ar1_pointanomaly(
            &Ar1Spec {
                n_channels: 6,
                length,
                seed,
                ..Ar1Spec::default()
            },
            &[],
        )
        .unwrap()
    }

    #[test]
    fn reverse_windows_example() {
        let w = WindowConfig::new(10, 5);
        let out = reverse_windows(&[1.0; 5], 30, &w);
        assert_eq!(&out[0..5], &[1.0; 5]);
        assert_eq!(&out[5..10], &[2.0; 5]);
        assert!(out[5..25].iter().all(|&x| x == 2.0));
        assert_eq!(&out[25..30], &[1.0; 5]);
    }

    #[test]
    fn uncovered_tail_is_zero() {
        let w = WindowConfig::new(10, 4);
        // windows start at 0, 4, 8; coverage ends at 18
        let out = reverse_windows(&[1.0; 3], 20, &w);
        assert_eq!(out[18], 0.0);
        assert_eq!(out[19], 0.0);
        assert_eq!(out[17], 1.0);
    }

    #[test]
    fn fixed_width_floats() {
        let a = fixed_width_float(1.0);
        let b = fixed_width_float(-1.234e-300);
        let c = fixed_width_float(0.1);
        assert_eq!(a.len(), b.len());
        assert_eq!(a.len(), c.len());
        for v in [1.0, -1.234e-300, 0.1, f64::MAX, f64::MIN_POSITIVE, 5e-324, -0.0] {
            let back: f64 = fixed_width_float(v).trim().parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v}");
        }
    }

    #[test]
    fn single_window_rejected() {
        let ts = series(1, 60);
        let cfg = TadaConfig {
            window: WindowConfig::new(50, 20),
            ..small_config()
        };
        assert!(matches!(fit(&ts, &cfg), Err(Error::TooFewWindows { have: 1, need: 2 })));
    }

    #[test]
    fn fit_dimensions_and_determinism() {
        let ts = series(3, 600);
        let cfg = small_config();
        let m1 = fit(&ts, &cfg).unwrap();
        assert_eq!(m1.embedding_dim(), m1.score_model.dim());
        assert_eq!(m1.embedding_dim(), 6);
        let m2 = fit(&ts, &cfg).unwrap();
        assert_eq!(m1.to_json().unwrap(), m2.to_json().unwrap());
    }

    #[test]
    fn round_trip_and_errors() {
        let ts = series(4, 500);
        let cfg = TadaConfig {
            threshold: Some(ThresholdLevel { alpha: 0.2, delta: 0.1 }),
            ..small_config()
        };
        let model = fit(&ts, &cfg).unwrap();
        let json = model.to_json().unwrap();
        let back = TadaModel::from_json(&json).unwrap();
        assert_eq!(back, model);
        let a = score_series(&model, &ts).unwrap();
        let b = score_series(&back, &ts).unwrap();
        assert_eq!(a, b);

        let truncated = &json[..json.len() / 2];
        assert!(matches!(TadaModel::from_json(truncated), Err(Error::CorruptModel(_))));
        let newer = json.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(
            TadaModel::from_json(&newer),
            Err(Error::VersionMismatch { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn channel_mismatch() {
        let ts = series(5, 400);
        let model = fit(&ts, &small_config()).unwrap();
        let other = generate_ar1_pointanomaly(
            &Ar1Spec {
                n_channels: 5,
                length: 400,
                ..Ar1Spec::default()
            },
            &[],
        )
        .unwrap();
        assert!(matches!(
            score_series(&model, &other),
            Err(Error::ChannelMismatch { expected: 6, found: 5 })
        ));
    }

    #[test]
    fn constant_channels_give_equal_scores() {
        let channels: Vec<Vec<f64>> = (0..5).map(|c| vec![c as f64; 300]).collect();
        let ts = TimeSeries::from_channels(channels).unwrap();
        let model = fit(&ts, &small_config()).unwrap();
        let s = score_series(&model, &ts).unwrap();
        let first = s.window_scores[0];
        assert!(s.window_scores.iter().all(|&x| x == first));
    }

    #[test]
    fn csv_writers() {
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &[0.5, 1.0]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "timestamp_index,score\n0,0.5\n1,1\n");
        let mut buf = Vec::new();
        write_window_csv(&mut buf, &[2.0], Some(&[vec![0.25, 0.5]])).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "window_index,window_score,center_0,center_1\n0,2,0.25,0.5\n"
        );
    }
}
