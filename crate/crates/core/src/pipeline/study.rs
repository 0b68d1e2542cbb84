use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluation::{
    hour_of, pr_sweep_benchmark, pr_sweep_detector, DetectorKind, EvaluationReport, IntervalDays,
};
use super::features::{featurize_windows, FeatureMatrix, FeatureMethod, NormalizationScope};
use super::trades::{aggregate_trades, build_channels, hourly_bars, load_labels, load_trades, PdLabel, TradeRecord};
use super::{PipelineError, Result};
use crate::detectors::{IsolationForestParams, McdParams};
use crate::paths::WindowConfig;
use crate::randsig::{sample_reservoir, ReservoirParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Exact,
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorName {
    Iforest,
    Mcd,
    Benchmark,
}

/// `n` log-spaced contamination rates from 0.001 to 0.3.
pub fn default_contamination_grid() -> Vec<f64> {
    let n = 40;
    let (lo, hi) = (0.001f64.ln(), 0.3f64.ln());
    (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CryptoStudyConfig {
    /// Directory holding one `<COIN>.csv` trade file per labeled coin.
    pub trades_dir: PathBuf,
    pub labels: PathBuf,
    pub window: WindowConfig,
    pub normalization: NormalizationScope,
    pub exact_degree_iforest: usize,
    pub exact_degree_mcd: usize,
    pub reservoir: ReservoirParams,
    pub iforest: IsolationForestParams,
    pub mcd: McdParams,
    pub contamination_grid: Vec<f64>,
    pub benchmark_steps: usize,
    pub ma_window: usize,
    pub intervals: Vec<IntervalDays>,
    pub methods: Vec<MethodName>,
    pub detectors: Vec<DetectorName>,
}

impl Default for CryptoStudyConfig {
    fn default() -> Self {
        Self {
            trades_dir: PathBuf::from("crates/core/fixtures/crypto/trades"),
            labels: PathBuf::from("crates/core/fixtures/crypto/labels.csv"),
            window: WindowConfig::default(),
            normalization: NormalizationScope::Interval,
            exact_degree_iforest: 3,
            exact_degree_mcd: 2,
            reservoir: ReservoirParams::crypto_preset(4, 0),
            iforest: IsolationForestParams::default(),
            mcd: McdParams::default(),
            contamination_grid: default_contamination_grid(),
            benchmark_steps: 101,
            ma_window: 12,
            intervals: IntervalDays::ALL.to_vec(),
            methods: vec![MethodName::Exact, MethodName::Randomized],
            detectors: vec![DetectorName::Iforest, DetectorName::Mcd, DetectorName::Benchmark],
        }
    }
}

impl CryptoStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        let bad = |msg: &str| Err(PipelineError::Config(msg.to_string()));
        if self.exact_degree_iforest == 0 || self.exact_degree_mcd == 0 {
            return bad("signature degrees must be at least 1");
        }
        if self.reservoir.input_dim != 4 {
            return bad("reservoir input_dim must be 4 (time, return, volume, side)");
        }
        if self.contamination_grid.is_empty() || self.contamination_grid.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return bad("contamination_grid must be non-empty with values in (0, 1)");
        }
        if self.benchmark_steps < 2 || self.ma_window == 0 {
            return bad("benchmark_steps must be >= 2 and ma_window >= 1");
        }
        if self.intervals.is_empty() || self.detectors.is_empty() {
            return bad("intervals and detectors must be non-empty");
        }
        if self.methods.is_empty() && self.detectors.iter().any(|d| *d != DetectorName::Benchmark) {
            return bad("signature detectors need at least one feature method");
        }
        Ok(())
    }
}

/// Loads `<dir>/<symbol>.csv` and merges same-key trades.
pub fn load_coin_trades(dir: &Path, symbol: &str) -> Result<Vec<TradeRecord>> {
    load_trades(&dir.join(format!("{symbol}.csv")))
        .map(|t| aggregate_trades(&t))
        .map_err(|e| e.for_coin(symbol))
}

/// The trades of one coin restricted to the hours around its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinInterval {
    pub symbol: String,
    pub first_hour: i64,
    pub last_hour: i64,
    pub trades: Vec<TradeRecord>,
}

pub fn prepare_interval(
    symbol: &str,
    trades: &[TradeRecord],
    labels: &[PdLabel],
    interval: IntervalDays,
) -> Result<CoinInterval> {
    let half = interval.half_width_hours();
    let hours = labels.iter().filter(|l| l.symbol == symbol).map(|l| hour_of(l.timestamp));
    let (lo, hi) = hours.fold((i64::MAX, i64::MIN), |(lo, hi), h| (lo.min(h), hi.max(h)));
    if lo > hi {
        return Err(PipelineError::Config(format!("no label for {symbol}")));
    }
    let (first_hour, last_hour) = (lo - half, hi + half);
    let trades = trades
        .iter()
        .filter(|t| (first_hour..=last_hour).contains(&hour_of(t.timestamp)))
        .cloned()
        .collect();
    Ok(CoinInterval {
        symbol: symbol.to_string(),
        first_hour,
        last_hour,
        trades,
    })
}

fn featurize_all(
    coins: &[CoinInterval],
    cfg: &CryptoStudyConfig,
    method: &FeatureMethod,
) -> Result<Vec<FeatureMatrix>> {
    coins
        .iter()
        .map(|c| {
            build_channels(&c.trades, false)
                .and_then(|s| featurize_windows(&c.symbol, &s, cfg.window, method, cfg.normalization))
                .map_err(|e| e.for_coin(&c.symbol))
        })
        .collect()
}

/// Runs every requested (detector, method, interval) combination. Reports
/// come out per interval, signature detectors first, benchmark last.
pub fn run_crypto_study(cfg: &CryptoStudyConfig) -> Result<Vec<EvaluationReport>> {
    cfg.validate()?;
    let labels = load_labels(&cfg.labels)?;
    let mut symbols: Vec<String> = labels.iter().map(|l| l.symbol.clone()).collect();
    symbols.sort();
    symbols.dedup();
    let trades: BTreeMap<String, Vec<TradeRecord>> = symbols
        .par_iter()
        .map(|s| load_coin_trades(&cfg.trades_dir, s).map(|t| (s.clone(), t)))
        .collect::<Result<_>>()?;
    let reservoir = cfg
        .methods
        .contains(&MethodName::Randomized)
        .then(|| sample_reservoir(&cfg.reservoir))
        .transpose()?;

    let mut reports = Vec::new();
    for &interval in &cfg.intervals {
        let coins: Vec<CoinInterval> = trades
            .iter()
            .map(|(s, t)| prepare_interval(s, t, &labels, interval))
            .collect::<Result<_>>()?;
        for &det in &cfg.detectors {
            let kind = match det {
                DetectorName::Iforest => DetectorKind::IsolationForest(cfg.iforest),
                DetectorName::Mcd => DetectorKind::Mcd(cfg.mcd),
                DetectorName::Benchmark => continue,
            };
            for &m in &cfg.methods {
                let method = match m {
                    MethodName::Exact => FeatureMethod::Exact {
                        degree: match det {
                            DetectorName::Mcd => cfg.exact_degree_mcd,
                            _ => cfg.exact_degree_iforest,
                        },
                        include_constant: false,
                    },
                    MethodName::Randomized => {
                        FeatureMethod::Randomized(reservoir.clone().expect("sampled above"))
                    }
                };
                let features = featurize_all(&coins, cfg, &method)?;
                reports.push(pr_sweep_detector(
                    &features,
                    &labels,
                    &kind,
                    &cfg.contamination_grid,
                    interval,
                )?);
            }
        }
        if cfg.detectors.contains(&DetectorName::Benchmark) {
            let warmup = cfg.ma_window as i64;
            let bars = coins
                .iter()
                .map(|c| {
                    let all = &trades[&c.symbol];
                    (c.symbol.clone(), hourly_bars(all, c.first_hour - warmup, c.last_hour))
                })
                .collect();
            reports.push(pr_sweep_benchmark(
                &bars,
                &labels,
                cfg.benchmark_steps,
                cfg.ma_window,
                interval,
            )?);
        }
    }
    Ok(reports)
}
