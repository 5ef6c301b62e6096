//! Multivariate series ingestion, window slicing and per-window correlation
//! similarity matrices.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default label column name, also used when writing generated datasets.
pub const LABEL_COLUMN: &str = "is_anomaly";

/// `L` timestamps by `D` channels, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    channels: Vec<Vec<f64>>,
    sample_rate: Option<f64>,
    labels: Option<Vec<bool>>,
}

impl TimeSeries {
    /// Builds a series from per-channel sample vectors.
    pub fn from_channels(channels: Vec<Vec<f64>>) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != len {
                return Err(Error::DimensionMismatch(format!(
                    "channel {c} has {} samples, channel 0 has {len}",
                    ch.len()
                )));
            }
            if let Some(t) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: t, column: c });
            }
        }
        Ok(Self {
            channels,
            sample_rate: None,
            labels: None,
        })
    }

    /// Builds a series from rows of `D` samples each.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut channels = vec![Vec::with_capacity(rows.len()); d];
        for (t, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {t} has {} values, expected {d}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                channels[c].push(v);
            }
        }
        Self::from_channels(channels)
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} timestamps",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Self {
        self.sample_rate = Some(hz);
        self
    }

    /// Number of timestamps `L`.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of channels `D`.
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    /// Reorders channels: channel `i` of the result is channel `perm[i]` of `self`.
    pub fn permute_channels(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_channels() {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} channels",
                perm.len(),
                self.n_channels()
            )));
        }
        let channels = perm.iter().map(|&p| self.channels[p].clone()).collect();
        Ok(Self {
            channels,
            sample_rate: self.sample_rate,
            labels: self.labels.clone(),
        })
    }

    /// Checks the `L >= 2, D >= 2` requirement of every downstream stage.
    pub fn check_usable(&self) -> Result<()> {
        if self.len() < 2 || self.n_channels() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "series needs at least 2 timestamps and 2 channels, got L = {}, D = {}",
                self.len(),
                self.n_channels()
            )));
        }
        Ok(())
    }
}

/// Sliding-window geometry, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub delta: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { delta: 100, stride: 10 }
    }
}

impl WindowConfig {
    pub fn new(delta: usize, stride: usize) -> Self {
        Self { delta, stride }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.delta < 2 {
            return Err(Error::InvalidConfig(format!(
                "window length must be at least 2, got {}",
                self.delta
            )));
        }
        if self.stride < 1 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if self.delta > len {
            return Err(Error::InvalidConfig(format!(
                "window length {} exceeds series length {len}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Number of windows `floor((L - delta) / stride) + 1`.
    pub fn window_count(&self, len: usize) -> Result<usize> {
        self.validate(len)?;
        Ok((len - self.delta) / self.stride + 1)
    }
}

/// Half-open sample ranges `[t * stride, t * stride + delta)`.
pub fn slice_windows(len: usize, cfg: &WindowConfig) -> Result<Vec<Range<usize>>> {
    let n = cfg.window_count(len)?;
    Ok((0..n)
        .map(|t| {
            let start = t * cfg.stride;
            start..start + cfg.delta
        })
        .collect())
}

/// Symmetric `D x D` matrix of `1 - corr` weights for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    weights: Vec<f64>,
    pub window_index: usize,
    /// Channels whose variance vanished in this window (correlation taken as 0).
    pub degenerate_channels: usize,
}

impl SimilarityMatrix {
    /// Builds a matrix from a dense row-major buffer, checking symmetry,
    /// the `[0, 2]` range and the zero diagonal.
    pub fn from_dense(n: usize, weights: Vec<f64>, window_index: usize) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {n} x {n} matrix",
                weights.len()
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::InvalidConfig(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !(0.0..=2.0).contains(&w) {
                    return Err(Error::InvalidConfig(format!("weight {w} at ({i}, {j}) outside [0, 2]")));
                }
                if w != weights[j * n + i] {
                    return Err(Error::InvalidConfig(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            n,
            weights,
            window_index,
            degenerate_channels: 0,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Row-major dense buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Centered samples and their norm; `None` norm marks a zero-variance channel.
fn centered(x: &[f64]) -> (Vec<f64>, Option<f64>) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss: f64 = dev.iter().map(|v| v * v).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // relative floor so that rounding residue of a constant channel is caught
    let norm = ss.sqrt();
    if norm == 0.0 || norm <= 1e-12 * scale * n.sqrt() {
        (dev, None)
    } else {
        (dev, Some(norm))
    }
}

/// Pearson similarity `1 - corr` over one window of `ts`.
///
/// A channel with zero variance in the window gets correlation 0 (weight 1)
/// against every other channel; the count is reported in
/// [`SimilarityMatrix::degenerate_channels`].
pub fn similarity(ts: &TimeSeries, range: Range<usize>, window_index: usize) -> Result<SimilarityMatrix> {
    if range.end > ts.len() || range.start >= range.end {
        return Err(Error::InvalidConfig(format!(
            "window {range:?} outside series of length {}",
            ts.len()
        )));
    }
    if range.len() < 2 {
        return Err(Error::InvalidConfig("window length must be at least 2".into()));
    }
    let d = ts.n_channels();
    let cols: Vec<(Vec<f64>, Option<f64>)> = ts.channels().iter().map(|ch| centered(&ch[range.clone()])).collect();
    let degenerate_channels = cols.iter().filter(|c| c.1.is_none()).count();

    let mut weights = vec![0.0; d * d];
    for i in 0..d {
        for j in (i + 1)..d {
            let corr = match (cols[i].1, cols[j].1) {
                (Some(ni), Some(nj)) => {
                    let dot: f64 = cols[i].0.iter().zip(&cols[j].0).map(|(a, b)| a * b).sum();
                    (dot / (ni * nj)).clamp(-1.0, 1.0)
                }
                _ => 0.0,
            };
            let w = 1.0 - corr;
            weights[i * d + j] = w;
            weights[j * d + i] = w;
        }
    }
    Ok(SimilarityMatrix {
        n: d,
        weights,
        window_index,
        degenerate_channels,
    })
}

/// CSV ingestion options.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Name of the label column; requires a header. A missing column is an
    /// error unless `label_optional` is set.
    pub label_column: Option<String>,
    pub label_optional: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            label_column: Some(LABEL_COLUMN.to_string()),
            label_optional: true,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut label_idx = None;
    // 1-based row numbers as seen in the file
    let first_data_row = if opts.has_header { 2 } else { 1 };
    if let Some(name) = &opts.label_column {
        if opts.has_header {
            let headers = rdr.headers().map_err(|e| csv_error(e, 1))?;
            label_idx = headers.iter().position(|h| h == name);
            if label_idx.is_none() && !opts.label_optional {
                return Err(Error::Parse {
                    row: 1,
                    column: 0,
                    message: format!("label column '{name}' not found in header"),
                });
            }
        } else if !opts.label_optional {
            return Err(Error::InvalidConfig(
                "a named label column requires a header row".into(),
            ));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let row = first_data_row + i;
        let rec = rec.map_err(|e| csv_error(e, row))?;
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "row {row} has {} fields, expected {w}",
                    rec.len()
                )))
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: col + 1 });
            }
            if Some(col) == label_idx {
                labels.push(v != 0.0);
            } else {
                values.push(v);
            }
        }
        rows.push(values);
    }
    let ts = TimeSeries::from_rows(&rows)?;
    if label_idx.is_some() {
        ts.with_labels(labels)
    } else {
        Ok(ts)
    }
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    Error::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}

/// Writes `ch0..ch{D-1}` columns, plus the label column when labels exist.
pub fn write_csv<W: Write>(ts: &TimeSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..ts.n_channels()).map(|c| format!("ch{c}")).collect();
    if ts.labels().is_some() {
        header.push(LABEL_COLUMN.to_string());
    }
    w.write_record(&header).map_err(csv_write_error)?;
    let mut row = Vec::with_capacity(header.len());
    for t in 0..ts.len() {
        row.clear();
        row.extend(ts.channels().iter().map(|ch| ch[t].to_string()));
        if let Some(l) = ts.labels() {
            row.push(if l[t] { "1" } else { "0" }.to_string());
        }
        w.write_record(&row).map_err(csv_write_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ts, std::io::BufWriter::new(file))
}

fn csv_write_error(e: csv::Error) -> Error {
    Error::io("<csv writer>", std::io::Error::other(e.to_string()))
}
