//! Pump-and-dump study: trade files in, hourly flags and PR sweeps out.

mod evaluation;
mod features;
pub mod fixture;
mod study;
mod trades;

pub use evaluation::{
    evaluate, hour_of, hourly_aggregate, pr_sweep_benchmark, pr_sweep_detector,
    DetectorKind, EvaluationReport, HourRecord, HourlyFlags, IntervalDays, MaxF1, SweepPoint,
    HOUR_MS,
};
pub use features::{featurize_windows, FeatureMatrix, FeatureMethod, NormalizationScope};
pub use study::{
    default_contamination_grid, load_coin_trades, prepare_interval, run_crypto_study,
    CoinInterval, CryptoStudyConfig, DetectorName, MethodName,
};
pub use trades::{
    aggregate_trades, build_channels, hourly_bars, load_labels, load_trades, write_labels,
    write_trades, HourlyBars, PdLabel, Side, TradeRecord,
};

use thiserror::Error;

use crate::detectors::DetectorError;
use crate::paths::PathError;
use crate::randsig::ReservoirError;
use crate::readout::ReadoutError;
use crate::tensoralg::TensorError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("{0}: file holds no records")]
    EmptyFile(String),
    #[error("need at least {needed} trades, got {got}")]
    TooFewTrades { needed: usize, got: usize },
    #[error("label {symbol} at {timestamp} lies outside the flagged hours")]
    LabelOutsideCoverage { symbol: String, timestamp: i64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("coin {symbol}: {source}")]
    Coin {
        symbol: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub(crate) fn for_coin(self, symbol: &str) -> Self {
        match self {
            e @ PipelineError::Coin { .. } => e,
            e => PipelineError::Coin {
                symbol: symbol.to_string(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
