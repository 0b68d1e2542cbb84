use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evaluation::{hour_of, HOUR_MS};
use super::{PipelineError, Result};
use crate::paths::{normalize_unit_interval, PathSeries};

const TRADE_HEADER: [&str; 5] = ["symbol", "timestamp", "side", "price", "amount"];
const LABEL_HEADER: [&str; 4] = ["symbol", "group", "timestamp", "exchange"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    /// Numeric encoding used as a path channel.
    pub fn encode(self) -> f64 {
        match self {
            Side::Buy => 0.5,
            Side::Sell => -0.5,
        }
    }
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "buy" => Ok(Side::Buy),
            "sell" => Ok(Side::Sell),
            other => Err(format!("side must be buy or sell, got {other:?}")),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        })
    }
}

/// One executed trade. `amount` is in base-currency units and `price` is
/// quote per base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub symbol: String,
    /// UNIX epoch milliseconds.
    pub timestamp: i64,
    pub side: Side,
    pub price: f64,
    pub amount: f64,
}

/// One labeled pump-and-dump attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdLabel {
    pub symbol: String,
    pub group: String,
    pub timestamp: i64,
    pub exchange: String,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PipelineError::Io(io),
        kind => PipelineError::Parse {
            path: path.display().to_string(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(PipelineError::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

fn parse_field<T: FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e: T::Err| PipelineError::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("{name}: {e}"),
    })
}

/// Reads a trades CSV and returns the records sorted by timestamp (stable).
pub fn load_trades(path: &Path) -> Result<Vec<TradeRecord>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &TRADE_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let side: Side = parse_field(path, line, "side", &rec[2])?;
        let price: f64 = parse_field(path, line, "price", &rec[3])?;
        let amount: f64 = parse_field(path, line, "amount", &rec[4])?;
        if !(price > 0.0 && price.is_finite() && amount > 0.0 && amount.is_finite()) {
            return Err(PipelineError::Parse {
                path: path.display().to_string(),
                line,
                msg: "price and amount must be positive".into(),
            });
        }
        out.push(TradeRecord {
            symbol: rec[0].to_string(),
            timestamp: parse_field(path, line, "timestamp", &rec[1])?,
            side,
            price,
            amount,
        });
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyFile(path.display().to_string()));
    }
    out.sort_by_key(|t| t.timestamp);
    Ok(out)
}

pub fn write_trades(path: &Path, trades: &[TradeRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", TRADE_HEADER.join(","))?;
    for t in trades {
        writeln!(w, "{},{},{},{},{}", t.symbol, t.timestamp, t.side, t.price, t.amount)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<PdLabel>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &LABEL_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(PdLabel {
            symbol: rec[0].to_string(),
            group: rec[1].to_string(),
            timestamp: parse_field(path, line, "timestamp", &rec[2])?,
            exchange: rec[3].to_string(),
        });
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyFile(path.display().to_string()));
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[PdLabel]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", LABEL_HEADER.join(","))?;
    for l in labels {
        writeln!(w, "{},{},{},{}", l.symbol, l.group, l.timestamp, l.exchange)?;
    }
    w.flush()?;
    Ok(())
}

/// Merges runs of consecutive trades with equal timestamp, side and price
/// into a single trade carrying the summed amount.
pub fn aggregate_trades(trades: &[TradeRecord]) -> Vec<TradeRecord> {
    let mut out: Vec<TradeRecord> = Vec::with_capacity(trades.len());
    for t in trades {
        match out.last_mut() {
            Some(last)
                if last.timestamp == t.timestamp
                    && last.side == t.side
                    && last.price == t.price
                    && last.symbol == t.symbol =>
            {
                last.amount += t.amount
            }
            _ => out.push(t.clone()),
        }
    }
    out
}

/// Channels `(time, simple return, volume, side)` per trade, with the raw
/// millisecond timestamps attached. When `normalize` is set every channel
/// is mapped onto `[0, 1]` over the whole series.
pub fn build_channels(trades: &[TradeRecord], normalize: bool) -> Result<PathSeries> {
    if trades.len() < 2 {
        return Err(PipelineError::TooFewTrades {
            needed: 2,
            got: trades.len(),
        });
    }
    let mut values = Vec::with_capacity(trades.len() * 4);
    let mut prev_price = trades[0].price;
    for t in trades {
        values.extend([
            t.timestamp as f64,
            t.price / prev_price - 1.0,
            t.price * t.amount,
            t.side.encode(),
        ]);
        prev_price = t.price;
    }
    let series = PathSeries::new(values, 4)?
        .with_channel_names(vec!["time", "return", "volume", "side"])?
        .with_timestamps(trades.iter().map(|t| t.timestamp as f64).collect())?;
    Ok(if normalize {
        normalize_unit_interval(&series, &[])
    } else {
        series
    })
}

/// Hourly close price and traded volume over `first_hour..=last_hour`.
/// Hours without trades repeat the previous close (the first trade's
/// price before any trade) and report zero volume.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyBars {
    pub first_hour: i64,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
}

pub fn hourly_bars(trades: &[TradeRecord], first_hour: i64, last_hour: i64) -> HourlyBars {
    let n = (last_hour - first_hour + 1).max(0) as usize;
    let mut close = vec![f64::NAN; n];
    let mut volume = vec![0.0; n];
    for t in trades {
        let h = hour_of(t.timestamp) - first_hour;
        if h < 0 || h as usize >= n {
            continue;
        }
        close[h as usize] = t.price;
        volume[h as usize] += t.price * t.amount;
    }
    let mut last = trades
        .iter()
        .rev()
        .find(|t| t.timestamp < first_hour * HOUR_MS)
        .or(trades.first())
        .map_or(0.0, |t| t.price);
    for c in close.iter_mut() {
        if c.is_nan() {
            *c = last;
        } else {
            last = *c;
        }
    }
    HourlyBars {
        first_hour,
        close,
        volume,
    }
}
