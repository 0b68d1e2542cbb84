//! Synthetic study data: geometric Brownian motion paths and "fake" paths
//! whose return signs never form long same-sign streaks.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paths::{augment_time, first_differences, PathError, PathSeries};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("n_paths must be even and positive, got {0}")]
    OddPathCount(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    TrainFraction(f64),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_paths: usize,
    pub steps: usize,
    /// Annual drift.
    pub mu: f64,
    /// Annual volatility.
    pub sigma: f64,
    pub s0: f64,
    /// Horizon in years.
    pub horizon: f64,
    pub pattern_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_paths: 20_000,
            steps: 252,
            mu: 0.25,
            sigma: 0.2,
            s0: 100.0,
            horizon: 1.0,
            pattern_len: 6,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(SynthError::Config(format!("sigma = {}", self.sigma)));
        }
        if !(self.s0 > 0.0) || !(self.horizon > 0.0) {
            return Err(SynthError::Config("s0 and horizon must be positive".into()));
        }
        if self.pattern_len < 2 || self.steps < self.pattern_len {
            return Err(SynthError::Config(format!(
                "need 2 <= pattern_len <= steps, got {} and {}",
                self.pattern_len, self.steps
            )));
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Log-Euler GBM path shifted by `-S0`, stamped with times `j * dt`.
fn gbm_path(cfg: &SynthConfig, stream: u64) -> PathSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let dt = cfg.dt();
    let drift = (cfg.mu - 0.5 * cfg.sigma * cfg.sigma) * dt;
    let vol = cfg.sigma * dt.sqrt();
    let mut price = cfg.s0;
    let mut values = Vec::with_capacity(cfg.steps + 1);
    values.push(0.0);
    for _ in 0..cfg.steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        price *= (drift + vol * z).exp();
        values.push(price - cfg.s0);
    }
    let times = (0..=cfg.steps).map(|j| j as f64 * dt).collect();
    PathSeries::new(values, 1)
        .and_then(|p| p.with_timestamps(times))
        .expect("finite GBM path")
}

fn gbm_paths(cfg: &SynthConfig, first_stream: u64, count: usize) -> Vec<PathSeries> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| gbm_path(cfg, first_stream + i))
        .collect()
}

/// Simulates `cfg.n_paths` shifted GBM paths (one channel, timestamps attached).
pub fn simulate_gbm(cfg: &SynthConfig) -> Result<Vec<PathSeries>> {
    cfg.validate()?;
    Ok(gbm_paths(cfg, 0, cfg.n_paths))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Removes every same-sign streak of `pattern_len` or more increments on
/// channel 0: scanning left to right, the increment that would complete
/// such a streak has its sign flipped. Magnitudes are kept.
pub fn suppress_patterns(path: &PathSeries, pattern_len: usize) -> Result<PathSeries> {
    if pattern_len < 2 {
        return Err(SynthError::Config(format!("pattern_len = {pattern_len}")));
    }
    let x = path.column(0);
    let mut out = Vec::with_capacity(x.len());
    let Some(&first) = x.first() else {
        return Ok(path.clone());
    };
    out.push(first);
    let (mut prev, mut run) = (0i8, 0usize);
    for w in x.windows(2) {
        let mut r = w[1] - w[0];
        let mut s = sign(r);
        run = if s != 0 && s == prev { run + 1 } else { 1 };
        if s != 0 && run >= pattern_len {
            r = -r;
            s = -s;
            run = 1;
        }
        prev = s;
        out.push(out.last().unwrap() + r);
    }
    let d = path.channels();
    let mut values = path.values().to_vec();
    for (row, v) in values.chunks_exact_mut(d).zip(out) {
        row[0] = v;
    }
    let mut series = PathSeries::new(values, d)?.with_channel_names(path.channel_names().to_vec())?;
    if let Some(ts) = path.timestamps() {
        series = series.with_timestamps(ts.to_vec())?;
    }
    if let Some(tc) = path.time_channel() {
        series = series.with_time_channel(tc)?;
    }
    Ok(series)
}

/// Maximal same-sign runs of channel-0 increments, counted by run length.
/// Zero increments break runs and are not counted.
pub fn streak_histogram(paths: &[PathSeries]) -> BTreeMap<usize, u64> {
    let mut hist = BTreeMap::new();
    for p in paths {
        let x = p.column(0);
        let (mut prev, mut run) = (0i8, 0usize);
        for w in x.windows(2) {
            let s = sign(w[1] - w[0]);
            if s == prev && s != 0 {
                run += 1;
                continue;
            }
            if prev != 0 {
                *hist.entry(run).or_insert(0) += 1;
            }
            prev = s;
            run = 1;
        }
        if prev != 0 {
            *hist.entry(run).or_insert(0) += 1;
        }
    }
    hist
}

/// One labeled `(t, X, ΔX)` series; label 1 is genuine GBM, 0 is fake.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPath {
    pub label: u8,
    pub series: PathSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<LabeledPath>,
    pub test: Vec<LabeledPath>,
}

fn to_features_series(p: &PathSeries) -> Result<PathSeries> {
    let with_time = augment_time(p)?;
    Ok(first_differences(&with_time, 1)?)
}

/// Generates half genuine and half suppressed paths, splits each class by
/// `train_fraction` and shuffles both splits with the config seed.
pub fn make_dataset(cfg: &SynthConfig, train_fraction: f64) -> Result<SynthDataset> {
    cfg.validate()?;
    if cfg.n_paths == 0 || !cfg.n_paths.is_multiple_of(2) {
        return Err(SynthError::OddPathCount(cfg.n_paths));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SynthError::TrainFraction(train_fraction));
    }
    let half = cfg.n_paths / 2;
    let real = gbm_paths(cfg, 0, half);
    let fake = gbm_paths(cfg, half as u64, half)
        .into_par_iter()
        .map(|p| suppress_patterns(&p, cfg.pattern_len))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5b17_u64);
    let n_train = ((half as f64) * train_fraction).round() as usize;
    let mut train = Vec::with_capacity(2 * n_train);
    let mut test = Vec::with_capacity(cfg.n_paths - 2 * n_train);
    for (label, paths) in [(1u8, real), (0u8, fake)] {
        let mut labeled = paths
            .par_iter()
            .map(|p| {
                Ok(LabeledPath {
                    label,
                    series: to_features_series(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        labeled.shuffle(&mut rng);
        test.extend(labeled.split_off(n_train.min(labeled.len())));
        train.extend(labeled);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(SynthDataset { train, test })
}

/// Writes one row per path: the label followed by the row-major samples.
pub fn write_dataset_csv(path: &Path, rows: &[LabeledPath]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(first) = rows.first() {
        let names = first.series.channel_names();
        let mut header = vec!["label".to_string()];
        for j in 0..first.series.len() {
            header.extend(names.iter().map(|n| format!("{n}_{j}")));
        }
        writeln!(w, "{}", header.join(","))?;
    }
    for row in rows {
        write!(w, "{}", row.label)?;
        for v in row.series.values() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, real: &BTreeMap<usize, u64>, fake: &BTreeMap<usize, u64>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "run_length,real,fake")?;
    let max = real.keys().chain(fake.keys()).copied().max().unwrap_or(0);
    for len in 1..=max {
        writeln!(
            w,
            "{len},{},{}",
            real.get(&len).unwrap_or(&0),
            fake.get(&len).unwrap_or(&0)
        )?;
    }
    w.flush()?;
    Ok(())
}
