//! Topological anomaly detection for multivariate time series.
//!
//! A series is cut into sliding windows; each window becomes a complete graph
//! weighted by `1 - corr(Y_i, Y_j)`, whose Vietoris-Rips persistence diagrams
//! are quantized against learned centroids, vectorized, and scored by a
//! (robust) Mahalanobis distance to the normal regime.
//!
//! ```text
//! TimeSeries -> windows -> SimilarityMatrix -> PersistenceDiagram (per order)
//!            -> CentroidSet / Vectorizer -> embedding -> ScoreModel -> scores
//! ```
//!
//! The data-parallel stages (per-window diagrams, quantization restarts,
//! MCD starts) run on rayon when the `parallel` feature is enabled and the
//! caller asks for [`Parallelism::Parallel`]. Results are identical in both
//! modes.

pub mod error;
pub mod evaluation;
pub mod parallel;
pub mod persistence;
pub mod pipeline;
pub mod quantization;
pub mod scoring;
pub mod synthgen;
pub mod timeseries;
pub mod vectorization;

pub use error::{Error, Result};
pub use parallel::Parallelism;
pub use persistence::{FilteredGraph, PersistenceDiagram, PersistencePoint, WeightFn};
pub use pipeline::{fit, score_series, ScoreSeries, TadaConfig, TadaModel};
pub use timeseries::{SimilarityMatrix, TimeSeries, WindowConfig};
