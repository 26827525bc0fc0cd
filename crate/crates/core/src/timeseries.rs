//! Regularly sampled scalar series and the preprocessing steps that turn
//! them into supervised training windows.
//!
//! Everything here is a pure function of its inputs.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};

/// Timestamped observations at a fixed interval.
///
/// `start_time` is a unix timestamp in seconds and `interval` a positive
/// number of seconds. There are no missing entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub start_time: i64,
    pub interval: i64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start_time: i64, interval: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(KinnError::EmptyInput("time series has no values".into()));
        }
        if interval <= 0 {
            return Err(KinnError::InvalidConfig(format!(
                "interval must be positive, got {interval}"
            )));
        }
        Ok(Self {
            start_time,
            interval,
            values,
        })
    }

    /// Series with unit spacing starting at the epoch; handy for simulated data.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(0, 1, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_time + self.interval * index as i64
    }

    /// Contiguous sub-series; the start time moves with the slice.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(KinnError::InvalidSplit(format!(
                "range {range:?} out of bounds for series of length {}",
                self.len()
            )));
        }
        Self::new(
            self.timestamp(range.start),
            self.interval,
            self.values[range].to_vec(),
        )
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        population_std(&self.values)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------
// CSV ingestion and export
// ---------------------------------------------------------------------------

/// Names of the timestamp and value columns in an input CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub timestamp: String,
    pub value: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            value: "value".into(),
        }
    }
}

/// What to do with missing observations at ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillPolicy {
    #[default]
    Reject,
    /// Repeat the last observed value across a gap that is a whole number
    /// of intervals.
    Forward,
}

/// Parses ISO-8601 / RFC 3339 timestamps, `YYYY-MM-DD HH:MM:SS` (read as
/// UTC) or raw integer unix seconds.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%m/%d/%Y %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(secs: i64) -> String {
    match DateTime::from_timestamp(secs, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => secs.to_string(),
    }
}

pub fn load_csv(path: impl AsRef<Path>, columns: &ColumnSpec, fill: FillPolicy) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| KinnError::io(path, e))?;
    read_csv(file, columns, fill)
}

/// Reads a headed CSV. Row indices in errors count data rows from 0.
pub fn read_csv<R: Read>(reader: R, columns: &ColumnSpec, fill: FillPolicy) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) if !h.is_empty() => h.clone(),
        Ok(_) => return Err(KinnError::EmptyInput("csv has no header".into())),
        Err(e) => return Err(e.into()),
    };
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            KinnError::InvalidConfig(format!("column `{name}` not found in csv header"))
        })
    };
    let ts_col = find(&columns.timestamp)?;
    let val_col = find(&columns.value)?;

    let mut rows: Vec<(i64, f64)> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| KinnError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let ts = record
            .get(ts_col)
            .and_then(parse_timestamp)
            .ok_or_else(|| KinnError::MalformedRow {
                row,
                reason: "unparseable timestamp".into(),
            })?;
        let value = record
            .get(val_col)
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| KinnError::MalformedRow {
                row,
                reason: "unparseable value".into(),
            })?;
        rows.push((ts, value));
    }
    if rows.is_empty() {
        return Err(KinnError::EmptyInput("csv has no data rows".into()));
    }
    if rows.len() == 1 {
        // A single observation cannot define an interval.
        return Err(KinnError::TooShort { needed: 2, got: 1 });
    }

    let interval = rows[1].0 - rows[0].0;
    if interval <= 0 {
        return Err(KinnError::NonMonotonic { index: 1 });
    }
    let mut values = Vec::with_capacity(rows.len());
    values.push(rows[0].1);
    for i in 1..rows.len() {
        let step = rows[i].0 - rows[i - 1].0;
        if step <= 0 {
            return Err(KinnError::NonMonotonic { index: i });
        }
        if step != interval {
            let fillable = fill == FillPolicy::Forward && step % interval == 0;
            if !fillable {
                return Err(KinnError::Gap {
                    index: i,
                    expected: interval,
                    found: step,
                });
            }
            let last = rows[i - 1].1;
            for _ in 1..step / interval {
                values.push(last);
            }
        }
        values.push(rows[i].1);
    }
    TimeSeries::new(rows[0].0, interval, values)
}

/// Two-column export: ISO-8601 timestamp, value.
pub fn write_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| KinnError::io(path, e))?;
    write_csv_to(ts, file).map_err(|e| match e {
        KinnError::Csv(c) => KinnError::io(path, std::io::Error::other(c.to_string())),
        other => other,
    })
}

pub fn write_csv_to<W: Write>(ts: &TimeSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "value"])?;
    for (i, v) in ts.values.iter().enumerate() {
        w.write_record([format_timestamp(ts.timestamp(i)), format!("{v}")])?;
    }
    w.flush().map_err(|e| KinnError::Csv(e.into()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Aggregation and splitting
// ---------------------------------------------------------------------------

/// Averages consecutive observations into buckets of `bucket` seconds.
/// A trailing partial bucket is dropped.
pub fn aggregate(ts: &TimeSeries, bucket: i64) -> Result<TimeSeries> {
    if bucket <= 0 || bucket % ts.interval != 0 {
        return Err(KinnError::InvalidBucket {
            bucket,
            interval: ts.interval,
        });
    }
    let per_bucket = (bucket / ts.interval) as usize;
    let values: Vec<f64> = ts
        .values
        .chunks_exact(per_bucket)
        .map(|chunk| chunk.iter().sum::<f64>() / per_bucket as f64)
        .collect();
    if values.is_empty() {
        return Err(KinnError::TooShort {
            needed: per_bucket,
            got: ts.len(),
        });
    }
    TimeSeries::new(ts.start_time, bucket, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Index ranges of a chronological three-way split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(KinnError::InvalidSplit(format!(
                    "{name} fraction {f} not in (0, 1)"
                )));
            }
        }
        let total = self.train + self.val + self.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(KinnError::InvalidSplit(format!(
                "fractions sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Floor for train and validation, remainder to test.
    pub fn bounds(&self, n: usize) -> Result<SplitBounds> {
        self.validate()?;
        // The epsilon keeps products like 100 * 0.7 from flooring to 69.
        let n_train = (n as f64 * self.train + 1e-9).floor() as usize;
        let n_val = (n as f64 * self.val + 1e-9).floor() as usize;
        let n_test = n.saturating_sub(n_train + n_val);
        for (name, len) in [("train", n_train), ("val", n_val), ("test", n_test)] {
            if len == 0 {
                return Err(KinnError::InvalidSplit(format!(
                    "{name} split is empty for a series of length {n}"
                )));
            }
        }
        Ok(SplitBounds {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: n_train + n_val..n,
        })
    }
}

/// Chronological train / validation / test split.
pub fn split(ts: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    let b = spec.bounds(ts.len())?;
    Ok((ts.slice(b.train)?, ts.slice(b.val)?, ts.slice(b.test)?))
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

/// z-score parameters estimated on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: f64,
    pub std: f64,
}

impl ScalerParams {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(KinnError::EmptyInput("cannot fit a scaler on no data".into()));
        }
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            return Err(KinnError::ZeroVariance(
                "training data is constant".into(),
            ));
        }
        Ok(Self {
            mean: mean(values),
            std: population_std(values),
        })
    }

    #[inline]
    pub fn scale(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn unscale(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    pub fn scale_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.scale(v)).collect()
    }

    pub fn unscale_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.unscale(v)).collect()
    }
}

pub fn fit_scaler(train: &TimeSeries) -> Result<ScalerParams> {
    ScalerParams::fit(&train.values)
}

pub fn transform(ts: &TimeSeries, scaler: &ScalerParams) -> TimeSeries {
    TimeSeries {
        values: scaler.scale_all(&ts.values),
        ..ts.clone()
    }
}

pub fn inverse_transform(ts: &TimeSeries, scaler: &ScalerParams) -> TimeSeries {
    TimeSeries {
        values: scaler.unscale_all(&ts.values),
        ..ts.clone()
    }
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// How the optional expert prediction is packed into a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelLayout {
    /// `p` steps, one channel.
    ValuesOnly,
    /// `p` steps, two channels; the second repeats the expert prediction.
    ValuesPlusExpert,
    /// `p + 1` steps, one channel; the expert prediction is the last step.
    ExpertAppended,
}

/// Sliding windows over a series, stored row-major as
/// `rows x seq_len x channels`.
///
/// Row `i` holds the `window` observations preceding `targets[i]`, oldest
/// first. `target_indices` records where each target sits in the source
/// series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub target_indices: Vec<usize>,
    pub window: usize,
    pub seq_len: usize,
    pub channels: usize,
    pub layout: ChannelLayout,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row_stride(&self) -> usize {
        self.seq_len * self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = self.row_stride();
        &self.inputs[i * s..(i + 1) * s]
    }

    /// Observed values of row `i`, whatever the layout.
    pub fn value_window(&self, i: usize) -> Vec<f64> {
        let row = self.row(i);
        (0..self.window).map(|t| row[t * self.channels]).collect()
    }

    /// Expert prediction carried by row `i`, if any.
    pub fn expert_value(&self, i: usize) -> Option<f64> {
        let row = self.row(i);
        match self.layout {
            ChannelLayout::ValuesOnly => None,
            ChannelLayout::ValuesPlusExpert => Some(row[1]),
            ChannelLayout::ExpertAppended => Some(row[self.window]),
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> WindowedDataset {
        let s = self.row_stride();
        let mut inputs = Vec::with_capacity(rows.len() * s);
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
        }
        WindowedDataset {
            inputs,
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
            target_indices: rows.iter().map(|&r| self.target_indices[r]).collect(),
            ..self.clone_shape()
        }
    }

    pub(crate) fn clone_shape(&self) -> WindowedDataset {
        WindowedDataset {
            inputs: Vec::new(),
            targets: Vec::new(),
            target_indices: Vec::new(),
            window: self.window,
            seq_len: self.seq_len,
            channels: self.channels,
            layout: self.layout,
        }
    }
}

/// Windows for every admissible target of `ts` (targets `p..n`).
pub fn make_windows(
    ts: &TimeSeries,
    window: usize,
    expert_preds: Option<&[f64]>,
    layout: ChannelLayout,
) -> Result<WindowedDataset> {
    if window == 0 {
        return Err(KinnError::InvalidConfig("window size must be positive".into()));
    }
    if ts.len() < window + 1 {
        return Err(KinnError::TooShort {
            needed: window + 1,
            got: ts.len(),
        });
    }
    windows_for_targets(&ts.values, window..ts.len(), window, expert_preds, layout)
}

/// Windows for targets `targets` of `values`, each reading the `window`
/// observations before it. `expert_preds[i]` belongs to target
/// `targets.start + i`.
pub fn windows_for_targets(
    values: &[f64],
    targets: Range<usize>,
    window: usize,
    expert_preds: Option<&[f64]>,
    layout: ChannelLayout,
) -> Result<WindowedDataset> {
    if window == 0 {
        return Err(KinnError::InvalidConfig("window size must be positive".into()));
    }
    if targets.start < window || targets.end > values.len() || targets.is_empty() {
        return Err(KinnError::TooShort {
            needed: window + 1,
            got: values.len().min(targets.end),
        });
    }
    let n = targets.len();
    let preds = match (layout, expert_preds) {
        (ChannelLayout::ValuesOnly, _) => None,
        (_, None) => {
            return Err(KinnError::Misaligned {
                expected: n,
                got: 0,
            })
        }
        (_, Some(p)) if p.len() != n => {
            return Err(KinnError::Misaligned {
                expected: n,
                got: p.len(),
            })
        }
        (_, Some(p)) => Some(p),
    };
    let (seq_len, channels) = match layout {
        ChannelLayout::ValuesOnly => (window, 1),
        ChannelLayout::ValuesPlusExpert => (window, 2),
        ChannelLayout::ExpertAppended => (window + 1, 1),
    };
    let mut inputs = Vec::with_capacity(n * seq_len * channels);
    for (i, t) in targets.clone().enumerate() {
        let past = &values[t - window..t];
        match layout {
            ChannelLayout::ValuesOnly => inputs.extend_from_slice(past),
            ChannelLayout::ValuesPlusExpert => {
                let e = preds.map(|p| p[i]).unwrap_or_default();
                for &v in past {
                    inputs.push(v);
                    inputs.push(e);
                }
            }
            ChannelLayout::ExpertAppended => {
                inputs.extend_from_slice(past);
                inputs.push(preds.map(|p| p[i]).unwrap_or_default());
            }
        }
    }
    Ok(WindowedDataset {
        inputs,
        targets: values[targets.clone()].to_vec(),
        target_indices: targets.collect(),
        window,
        seq_len,
        channels,
        layout,
    })
}

// ---------------------------------------------------------------------------
// Autocorrelation diagnostics
// ---------------------------------------------------------------------------

/// Sample autocorrelations for lags `0..=max_lag` (mean removed, biased
/// normalisation by `n`).
pub fn acf(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if n <= max_lag + 1 {
        return Err(KinnError::TooShort {
            needed: max_lag + 2,
            got: n,
        });
    }
    let m = mean(values);
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 <= 0.0 {
        return Err(KinnError::ZeroVariance("series is constant".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                centered[k..]
                    .iter()
                    .zip(&centered[..n - k])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / c0
            }
        })
        .collect())
}

/// Partial autocorrelations for lags `0..=max_lag` via the Durbin-Levinson
/// recursion on the sample autocorrelations. Entry 0 is exactly 1.
pub fn pacf(ts: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    pacf_values(&ts.values, max_lag)
}

pub fn pacf_values(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(values, max_lag)?;
    Ok(durbin_levinson(&r))
}

/// Durbin-Levinson on an autocorrelation sequence `r[0..=m]` with
/// `r[0] = 1`. Returns the reflection (partial autocorrelation)
/// coefficients, with a leading 1.
pub(crate) fn durbin_levinson(r: &[f64]) -> Vec<f64> {
    let m = r.len() - 1;
    let mut out = Vec::with_capacity(m + 1);
    out.push(1.0);
    let mut phi = vec![0.0; m + 1];
    let mut prev = vec![0.0; m + 1];
    let mut err = r[0];
    for k in 1..=m {
        let acc: f64 = (1..k).map(|j| prev[j] * r[k - j]).sum();
        let kappa = if err.abs() < f64::MIN_POSITIVE {
            0.0
        } else {
            (r[k] - acc) / err
        };
        phi[k] = kappa;
        for j in 1..k {
            phi[j] = prev[j] - kappa * prev[k - j];
        }
        err *= 1.0 - kappa * kappa;
        prev[..=k].copy_from_slice(&phi[..=k]);
        out.push(kappa);
    }
    out
}

/// Half-width of the usual large-sample confidence band, `2 / sqrt(n)`.
pub fn pacf_band(n: usize) -> f64 {
    2.0 / (n as f64).sqrt()
}
