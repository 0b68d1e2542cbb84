//! Multichannel time series viewed as piecewise-linear paths.
//!
//! A [`PathSeries`] stores `L` samples of `d` channels in row-major order.
//! Linear interpolation between consecutive samples turns it into a path
//! of bounded variation, which is what the signature code consumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("time stamps are not strictly increasing at sample {index}")]
    NonIncreasingTime { index: usize },
    #[error("channel index {index} out of range for {channels} channels")]
    InvalidChannel { index: usize, channels: usize },
    #[error("series has {len} samples, at least {needed} required")]
    InsufficientData { len: usize, needed: usize },
    #[error("non-finite value at sample {sample}, channel {channel}")]
    NonFinite { sample: usize, channel: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid window configuration: window {window}, offset {offset}")]
    InvalidWindow { window: usize, offset: usize },
    #[error("series already has a time channel")]
    HasTimeChannel,
}

pub type Result<T> = std::result::Result<T, PathError>;

/// A finite multichannel time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSeries {
    values: Vec<f64>,
    channels: usize,
    channel_names: Vec<String>,
    time_channel: Option<usize>,
    /// Observation times kept alongside the values when no channel holds them.
    timestamps: Option<Vec<f64>>,
}

impl PathSeries {
    /// Builds a series from row-major values.
    pub fn new(values: Vec<f64>, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(PathError::Shape("zero channels".into()));
        }
        if !values.len().is_multiple_of(channels) {
            return Err(PathError::Shape(format!(
                "{} values do not fill rows of {} channels",
                values.len(),
                channels
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(PathError::NonFinite {
                sample: pos / channels,
                channel: pos % channels,
            });
        }
        let channel_names = (0..channels).map(|c| format!("c{c}")).collect();
        Ok(Self {
            values,
            channels,
            channel_names,
            time_channel: None,
            timestamps: None,
        })
    }

    /// Builds a series from equally long columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let channels = columns.len();
        if channels == 0 {
            return Err(PathError::Shape("zero channels".into()));
        }
        let len = columns[0].len();
        if columns.iter().any(|c| c.len() != len) {
            return Err(PathError::Shape("columns differ in length".into()));
        }
        let mut values = Vec::with_capacity(len * channels);
        for j in 0..len {
            values.extend(columns.iter().map(|c| c[j]));
        }
        Self::new(values, channels)
    }

    /// Attaches observation times without adding a channel.
    pub fn with_timestamps(mut self, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.len() != self.len() {
            return Err(PathError::Shape(format!(
                "{} timestamps for {} samples",
                timestamps.len(),
                self.len()
            )));
        }
        if let Some(sample) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(PathError::NonFinite { sample, channel: 0 });
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    /// Marks an existing channel as the time channel after checking it increases strictly.
    pub fn with_time_channel(mut self, channel: usize) -> Result<Self> {
        self.check_channel(channel)?;
        check_increasing(&self.column(channel))?;
        self.time_channel = Some(channel);
        Ok(self)
    }

    pub fn with_channel_names<S: Into<String>>(mut self, names: Vec<S>) -> Result<Self> {
        if names.len() != self.channels {
            return Err(PathError::Shape(format!(
                "{} names for {} channels",
                names.len(),
                self.channels
            )));
        }
        self.channel_names = names.into_iter().map(Into::into).collect();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn time_channel(&self) -> Option<usize> {
        self.time_channel
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.channels..(j + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.channels)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c]).collect()
    }

    /// Increment vectors of the `L - 1` linear segments.
    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.rows()
            .zip(self.rows().skip(1))
            .map(|(a, b)| b.iter().zip(a).map(|(y, x)| y - x).collect())
    }

    /// Contiguous sub-series of `len` samples starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(PathError::InsufficientData {
                len: self.len(),
                needed: start + len,
            });
        }
        let d = self.channels;
        Ok(Self {
            values: self.values[start * d..(start + len) * d].to_vec(),
            channels: d,
            channel_names: self.channel_names.clone(),
            time_channel: self.time_channel,
            timestamps: self
                .timestamps
                .as_ref()
                .map(|t| t[start..start + len].to_vec()),
        })
    }

    fn check_channel(&self, index: usize) -> Result<()> {
        if index >= self.channels {
            return Err(PathError::InvalidChannel {
                index,
                channels: self.channels,
            });
        }
        Ok(())
    }

    fn from_parts_unchecked(
        values: Vec<f64>,
        channels: usize,
        channel_names: Vec<String>,
        time_channel: Option<usize>,
        timestamps: Option<Vec<f64>>,
    ) -> Self {
        Self {
            values,
            channels,
            channel_names,
            time_channel,
            timestamps,
        }
    }
}

fn check_increasing(ts: &[f64]) -> Result<()> {
    match ts.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(PathError::NonIncreasingTime { index: i + 1 }),
        None => Ok(()),
    }
}

/// Prepends a time channel built from the attached timestamps, or from
/// sample indices `0..L` when there are none.
pub fn augment_time(series: &PathSeries) -> Result<PathSeries> {
    if series.time_channel.is_some() {
        return Err(PathError::HasTimeChannel);
    }
    let times: Vec<f64> = match &series.timestamps {
        Some(ts) => {
            check_increasing(ts)?;
            ts.clone()
        }
        None => (0..series.len()).map(|j| j as f64).collect(),
    };
    let d = series.channels + 1;
    let mut values = Vec::with_capacity(series.len() * d);
    for (t, row) in times.iter().zip(series.rows()) {
        values.push(*t);
        values.extend_from_slice(row);
    }
    let mut names = Vec::with_capacity(d);
    names.push("time".to_string());
    names.extend(series.channel_names.iter().cloned());
    Ok(PathSeries::from_parts_unchecked(
        values,
        d,
        names,
        Some(0),
        series.timestamps.clone(),
    ))
}

/// Appends the first differences of `channel`, with a leading zero.
pub fn first_differences(series: &PathSeries, channel: usize) -> Result<PathSeries> {
    series.check_channel(channel)?;
    let d = series.channels + 1;
    let mut values = Vec::with_capacity(series.len() * d);
    let mut prev = None;
    for row in series.rows() {
        values.extend_from_slice(row);
        values.push(prev.map_or(0.0, |p| row[channel] - p));
        prev = Some(row[channel]);
    }
    let mut names = series.channel_names.clone();
    names.push(format!("d_{}", series.channel_names[channel]));
    Ok(PathSeries::from_parts_unchecked(
        values,
        d,
        names,
        series.time_channel,
        series.timestamps.clone(),
    ))
}

/// Maps every channel not in `exclude` affinely onto `[0, 1]`.
/// Constant channels become all zeros.
pub fn normalize_unit_interval(series: &PathSeries, exclude: &[usize]) -> PathSeries {
    let d = series.channels;
    let mut out = series.values.clone();
    for c in (0..d).filter(|c| !exclude.contains(c)) {
        let (lo, hi) = series
            .rows()
            .map(|r| r[c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        for row in out.chunks_exact_mut(d) {
            row[c] = if span > 0.0 { (row[c] - lo) / span } else { 0.0 };
        }
    }
    PathSeries::from_parts_unchecked(
        out,
        d,
        series.channel_names.clone(),
        series.time_channel,
        series.timestamps.clone(),
    )
}

/// Window length and advance, both counted in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window: usize,
    pub offset: usize,
}

impl WindowConfig {
    pub fn new(window: usize, offset: usize) -> Result<Self> {
        let cfg = Self { window, offset };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.offset == 0 || self.offset > self.window {
            return Err(PathError::InvalidWindow {
                window: self.window,
                offset: self.offset,
            });
        }
        Ok(())
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window: 100,
            offset: 5,
        }
    }
}

/// Start indices of the `ceil(L / o)` windows over a series of length
/// `len`. Windows that would run past the end are pulled back so they end
/// on the final sample.
pub fn window_starts(len: usize, cfg: WindowConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if len < cfg.window {
        return Err(PathError::InsufficientData {
            len,
            needed: cfg.window,
        });
    }
    let last = len - cfg.window;
    let count = len.div_ceil(cfg.offset);
    Ok((0..count).map(|i| (i * cfg.offset).min(last)).collect())
}

pub fn sliding_windows(series: &PathSeries, cfg: WindowConfig) -> Result<Vec<PathSeries>> {
    window_starts(series.len(), cfg)?
        .into_iter()
        .map(|s| series.slice(s, cfg.window))
        .collect()
}
