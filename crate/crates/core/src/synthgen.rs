//! Synthetic data: "topological wheels" latent-factor mixtures and AR(1)
//! series with point anomalies.
//!
//! Wheel layout on `D = 2P` channels. Channels are paired `(2i, 2i + 1)`;
//! pair `i` feeds pair `i + 1 (mod P)` through the edge `(2i + 1, 2i + 2)`,
//! which closes a ring of pairs. Type I adds one chord `(0, 2 * (P / 2))`
//! across the ring, turning it into a figure eight. Type II adds a second
//! chord `(2 * (P / 4), 2 * (3P / 4))` on top of that.
//!
//! ```text
//!   P = 4 (D = 8), pairs drawn as [a b]:
//!
//!        [0 1] ---- [2 3]          type I chord:  0 -- 4
//!          |  \       |            type II chord: 2 -- 6
//!          |   \      |
//!        [6 7] ---- [4 5]
//! ```
//!
//! Every latent edge carries an independent AR(2) factor; a channel is the
//! sum of the factors on its incident edges plus white noise. During the
//! anomalous segment the type II chord factor is switched on.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

const BURN_IN: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WheelMode {
    TypeI,
    TypeII,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentGraph {
    pub mode: WheelMode,
    pub n_channels: usize,
    pub edges: Vec<(usize, usize)>,
}

pub fn build_wheel_graph(d: usize, mode: WheelMode) -> Result<LatentGraph> {
    if d < 8 || !d.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "wheel graphs need an even channel count of at least 8, got {d}"
        )));
    }
    let pairs = d / 2;
    let mut edges = Vec::with_capacity(d + 2);
    for i in 0..pairs {
        edges.push((2 * i, 2 * i + 1));
    }
    for i in 0..pairs {
        let a = 2 * i + 1;
        let b = 2 * ((i + 1) % pairs);
        edges.push((a.min(b), a.max(b)));
    }
    edges.push((0, 2 * (pairs / 2)));
    if mode == WheelMode::TypeII {
        edges.push((2 * (pairs / 4), 2 * (3 * pairs / 4)));
    }
    Ok(LatentGraph {
        mode,
        n_channels: d,
        edges,
    })
}

/// Stationary AR(2) with a spectral peak at `peak_hz`: characteristic roots
/// `M e^{+-i theta}`, `theta = 2 pi peak / fs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2 {
    pub phi1: f64,
    pub phi2: f64,
}

impl Ar2 {
    pub fn new(peak_hz: f64, sample_rate: f64, modulus: f64) -> Result<Self> {
        if modulus.is_nan() || modulus <= 1.0 || modulus.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "AR(2) modulus must exceed 1 for stationarity, got {modulus}"
            )));
        }
        if sample_rate.is_nan() || sample_rate <= 0.0 || !(0.0..=sample_rate / 2.0).contains(&peak_hz) {
            return Err(Error::InvalidConfig(format!(
                "peak frequency {peak_hz} Hz outside [0, {}] Hz",
                sample_rate / 2.0
            )));
        }
        let theta = 2.0 * std::f64::consts::PI * peak_hz / sample_rate;
        let ar = Self {
            phi1: 2.0 * theta.cos() / modulus,
            phi2: -1.0 / (modulus * modulus),
        };
        debug_assert!(ar.is_stationary());
        Ok(ar)
    }

    /// Stationarity triangle: `|phi2| < 1`, `phi2 + phi1 < 1`, `phi2 - phi1 < 1`.
    pub fn is_stationary(&self) -> bool {
        self.phi2.abs() < 1.0 && self.phi2 + self.phi1 < 1.0 && self.phi2 - self.phi1 < 1.0
    }

    pub fn simulate(&self, len: usize, rng: &mut impl Rng) -> Vec<f64> {
        let (mut z1, mut z2) = (0.0, 0.0);
        let mut out = Vec::with_capacity(len);
        for t in 0..(BURN_IN + len) {
            let eps: f64 = StandardNormal.sample(rng);
            let z = self.phi1 * z1 + self.phi2 * z2 + eps;
            z2 = z1;
            z1 = z;
            if t >= BURN_IN {
                out.push(z);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WheelSpec {
    pub n_channels: usize,
    pub sample_rate: f64,
    pub duration_s: f64,
    pub anomaly_len: usize,
    /// `None` draws the start uniformly from the seed.
    pub anomaly_start: Option<usize>,
    pub seed: u64,
    pub ar2_peak_freq: f64,
    pub ar2_modulus: f64,
    pub noise_std: f64,
}

impl Default for WheelSpec {
    fn default() -> Self {
        Self {
            n_channels: 64,
            sample_rate: 500.0,
            duration_s: 20.0,
            anomaly_len: 500,
            anomaly_start: None,
            seed: 0,
            ar2_peak_freq: 10.0,
            ar2_modulus: 1.01,
            noise_std: 1.0,
        }
    }
}

impl WheelSpec {
    pub fn length(&self) -> usize {
        (self.sample_rate * self.duration_s).round() as usize
    }

    fn validate(&self) -> Result<()> {
        build_wheel_graph(self.n_channels, WheelMode::TypeI)?;
        let len = self.length();
        if self.anomaly_len > len {
            return Err(Error::InvalidConfig(format!(
                "anomaly of {} samples does not fit in {len}",
                self.anomaly_len
            )));
        }
        if let Some(s) = self.anomaly_start {
            if s + self.anomaly_len > len {
                return Err(Error::InvalidConfig(format!(
                    "anomaly [{s}, {}) exceeds series length {len}",
                    s + self.anomaly_len
                )));
            }
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(Error::InvalidConfig("noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Wheel dataset plus the resolved anomaly start.
pub fn generate_wheels_with_start(spec: &WheelSpec) -> Result<(TimeSeries, usize)> {
    spec.validate()?;
    let len = spec.length();
    let normal = build_wheel_graph(spec.n_channels, WheelMode::TypeI)?;
    let abnormal = build_wheel_graph(spec.n_channels, WheelMode::TypeII)?;
    let extra = *abnormal.edges.last().expect("type II has the extra chord");
    let ar = Ar2::new(spec.ar2_peak_freq, spec.sample_rate, spec.ar2_modulus)?;

    let start = match spec.anomaly_start {
        Some(s) => s,
        None => stream(spec.seed, u64::MAX).random_range(0..=len - spec.anomaly_len),
    };
    let end = start + spec.anomaly_len;

    let mut channels = vec![vec![0.0; len]; spec.n_channels];
    for (e, &(a, b)) in normal.edges.iter().enumerate() {
        let z = ar.simulate(len, &mut stream(spec.seed, e as u64));
        for t in 0..len {
            channels[a][t] += z[t];
            channels[b][t] += z[t];
        }
    }
    let z = ar.simulate(len, &mut stream(spec.seed, normal.edges.len() as u64));
    for t in start..end {
        channels[extra.0][t] += z[t];
        channels[extra.1][t] += z[t];
    }
    add_noise(&mut channels, spec.noise_std, spec.seed);
    let labels = (0..len).map(|t| t >= start && t < end).collect();
    let ts = TimeSeries::from_channels(channels)?
        .with_labels(labels)?
        .with_sample_rate(spec.sample_rate);
    Ok((ts, start))
}

pub fn generate_wheels(spec: &WheelSpec) -> Result<TimeSeries> {
    generate_wheels_with_start(spec).map(|(ts, _)| ts)
}

/// Channels as sums of independent AR(2) factors on the edges of `graph`
/// plus white noise of standard deviation `noise_std`.
pub fn mix_latent(graph: &LatentGraph, ar: &Ar2, len: usize, noise_std: f64, seed: u64) -> Result<TimeSeries> {
    let mut channels = vec![vec![0.0; len]; graph.n_channels];
    for (e, &(a, b)) in graph.edges.iter().enumerate() {
        if a >= graph.n_channels || b >= graph.n_channels {
            return Err(Error::InvalidConfig(format!(
                "edge ({a}, {b}) outside the channel range"
            )));
        }
        let z = ar.simulate(len, &mut stream(seed, e as u64));
        for t in 0..len {
            channels[a][t] += z[t];
            channels[b][t] += z[t];
        }
    }
    add_noise(&mut channels, noise_std, seed);
    TimeSeries::from_channels(channels)
}

fn add_noise(channels: &mut [Vec<f64>], noise_std: f64, seed: u64) {
    let mut rng = stream(seed, 1 << 32);
    for ch in channels.iter_mut() {
        for v in ch.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += noise_std * n;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointAnomaly {
    pub position: usize,
    /// `None` adds the spike to every channel.
    pub channel: Option<usize>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Spec {
    pub n_channels: usize,
    pub length: usize,
    pub phi: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for Ar1Spec {
    fn default() -> Self {
        Self {
            n_channels: 8,
            length: 2000,
            phi: 0.9,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

/// Independent stationary AR(1) channels with additive spikes; labels mark
/// spike timestamps.
pub fn generate_ar1_pointanomaly(spec: &Ar1Spec, anomalies: &[PointAnomaly]) -> Result<TimeSeries> {
    if spec.phi.abs() >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "AR(1) coefficient {} is not stationary",
            spec.phi
        )));
    }
    if spec.n_channels == 0 || spec.length == 0 {
        return Err(Error::InvalidConfig("empty AR(1) series requested".into()));
    }
    for a in anomalies {
        if a.position >= spec.length {
            return Err(Error::PositionOutOfRange {
                position: a.position,
                length: spec.length,
            });
        }
        if let Some(c) = a.channel {
            if c >= spec.n_channels {
                return Err(Error::InvalidConfig(format!(
                    "spike channel {c} out of range for {} channels",
                    spec.n_channels
                )));
            }
        }
    }
    let stationary_sd = spec.noise_std / (1.0 - spec.phi * spec.phi).sqrt();
    let mut channels = Vec::with_capacity(spec.n_channels);
    for c in 0..spec.n_channels {
        let mut rng = stream(spec.seed, c as u64);
        let mut x = stationary_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let mut ch = Vec::with_capacity(spec.length);
        for _ in 0..spec.length {
            ch.push(x);
            let eps: f64 = StandardNormal.sample(&mut rng);
            x = spec.phi * x + spec.noise_std * eps;
        }
        channels.push(ch);
    }
    let mut labels = vec![false; spec.length];
    for a in anomalies {
        match a.channel {
            Some(c) => channels[c][a.position] += a.magnitude,
            None => channels.iter_mut().for_each(|ch| ch[a.position] += a.magnitude),
        }
        labels[a.position] = true;
    }
    TimeSeries::from_channels(channels)?.with_labels(labels)
}

/// `count` spikes at distinct random positions, each on one random channel.
pub fn random_point_anomalies(spec: &Ar1Spec, count: usize, magnitude: f64) -> Result<Vec<PointAnomaly>> {
    if count > spec.length {
        return Err(Error::InvalidConfig(format!(
            "{count} anomalies requested for {} timestamps",
            spec.length
        )));
    }
    let mut rng = stream(spec.seed, u64::MAX);
    let positions: BTreeSet<usize> = sample(&mut rng, spec.length, count).into_iter().collect();
    Ok(positions
        .into_iter()
        .map(|position| PointAnomaly {
            position,
            channel: Some(rng.random_range(0..spec.n_channels)),
            magnitude,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::similarity;

    #[test]
    fn wheel_edge_counts() {
        let g1 = build_wheel_graph(8, WheelMode::TypeI).unwrap();
        // 4 pair edges + 4 ring edges + 1 chord
        assert_eq!(g1.edges.len(), 9);
        let g2 = build_wheel_graph(8, WheelMode::TypeII).unwrap();
        assert_eq!(g2.edges.len(), 10);
        assert_eq!(&g2.edges[..9], &g1.edges[..]);
        let unique: BTreeSet<_> = g2.edges.iter().collect();
        assert_eq!(unique.len(), 10);
        assert!(g2.edges.iter().all(|&(a, b)| a < b && b < 8));
    }

    #[test]
    fn wheel_invalid_channels() {
        assert!(build_wheel_graph(7, WheelMode::TypeI).is_err());
        assert!(build_wheel_graph(6, WheelMode::TypeI).is_err());
    }

    #[test]
    fn ar2_is_stationary() {
        let ar = Ar2::new(10.0, 500.0, 1.01).unwrap();
        assert!(ar.is_stationary());
        assert!(Ar2::new(10.0, 500.0, 1.0).is_err());
        assert!(Ar2::new(300.0, 500.0, 1.1).is_err());
    }

    #[test]
    fn wheels_labels_and_determinism() {
        let spec = WheelSpec {
            n_channels: 8,
            duration_s: 4.0,
            anomaly_len: 300,
            seed: 3,
            ..WheelSpec::default()
        };
        let (a, start) = generate_wheels_with_start(&spec).unwrap();
        let b = generate_wheels(&spec).unwrap();
        assert_eq!(a, b);
        let labels = a.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l).count(), 300);
        assert!(labels[start] && labels[start + 299]);
    }

    #[test]
    fn shared_edge_without_noise_is_perfectly_correlated() {
        let g = LatentGraph {
            mode: WheelMode::TypeI,
            n_channels: 2,
            edges: vec![(0, 1)],
        };
        let ar = Ar2::new(10.0, 500.0, 1.01).unwrap();
        let ts = mix_latent(&g, &ar, 1000, 0.0, 1).unwrap();
        assert!(similarity(&ts, 0..500, 0).unwrap().get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn disjoint_edges_are_uncorrelated_on_average() {
        let g = LatentGraph {
            mode: WheelMode::TypeI,
            n_channels: 4,
            edges: vec![(0, 1), (2, 3)],
        };
        let ar = Ar2::new(10.0, 500.0, 1.01).unwrap();
        let delta = 500;
        let windows = 200;
        let ts = mix_latent(&g, &ar, delta * windows, 1.0, 5).unwrap();
        let mean: f64 = (0..windows)
            .map(|w| similarity(&ts, w * delta..(w + 1) * delta, w).unwrap().get(0, 2))
            .sum::<f64>()
            / windows as f64;
        assert!(
            (mean - 1.0).abs() < 3.0 / (delta as f64).sqrt(),
            "mean similarity {mean}"
        );
    }

    #[test]
    fn ar1_examples() {
        let spec = Ar1Spec {
            n_channels: 2,
            length: 200,
            seed: 9,
            ..Ar1Spec::default()
        };
        let clean = generate_ar1_pointanomaly(&spec, &[]).unwrap();
        assert!(clean.labels().unwrap().iter().all(|&l| !l));
        let zero = generate_ar1_pointanomaly(
            &spec,
            &[PointAnomaly {
                position: 10,
                channel: None,
                magnitude: 0.0,
            }],
        )
        .unwrap();
        assert_eq!(zero.channels(), clean.channels());
        assert!(zero.labels().unwrap()[10]);
        let bad = generate_ar1_pointanomaly(
            &spec,
            &[PointAnomaly {
                position: 200,
                channel: None,
                magnitude: 1.0,
            }],
        );
        assert!(matches!(bad, Err(Error::PositionOutOfRange { .. })));
    }

    #[test]
    fn random_anomalies_are_distinct() {
        let spec = Ar1Spec::default();
        let a = random_point_anomalies(&spec, 5, 4.0).unwrap();
        let ts = generate_ar1_pointanomaly(&spec, &a).unwrap();
        assert_eq!(ts.labels().unwrap().iter().filter(|&&l| l).count(), 5);
    }
}
