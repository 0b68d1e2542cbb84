//! Synthetic labeled market used as the bundled crypto fixture.
//!
//! Each coin trades for `half_span_days` on either side of one labeled
//! pump: a burst of a few hundred buys lasting a couple of minutes that
//! lifts the price sharply, followed by a sell-off. Background trading is a
//! diurnal Poisson stream on a random-walk price. Unlabeled events (organic
//! rallies, whale fills, bot bursts, sharp dips) are scattered over the
//! whole span so that wider evaluation intervals see more of them.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::evaluation::HOUR_MS;
use super::trades::{write_labels, write_trades, PdLabel, Side, TradeRecord};
use super::Result;

const TICKERS: [&str; 24] = [
    "AXR", "BLQ", "CVT", "DRM", "EKO", "FYN", "GLZ", "HPX", "IVO", "JRT", "KWL", "LMX", "MZR",
    "NOV", "OQT", "PYX", "QRB", "RKV", "SLT", "TZN", "UMB", "VXE", "WOL", "XEQ",
];
const GROUPS: [&str; 4] = ["moon_signals", "alt_pumpers", "rocket_club", "whale_calls"];
const DAY_MS: i64 = 24 * HOUR_MS;
/// 2019-01-07T00:00:00Z.
const EPOCH_START_MS: i64 = 1_546_819_200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureConfig {
    pub n_coins: usize,
    pub half_span_days: i64,
    /// Mean background trades per hour, before per-coin scaling.
    pub base_rate: f64,
    /// Unlabeled events per coin per day.
    pub distractors_per_day: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            n_coins: 16,
            half_span_days: 7,
            base_rate: 50.0,
            distractors_per_day: 0.6,
            seed: 2019,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    /// `(coin, trades)` sorted by coin.
    pub coins: Vec<(String, Vec<TradeRecord>)>,
    pub labels: Vec<PdLabel>,
    /// Unlabeled events, for inspection; not written to disk.
    pub events: Vec<FixtureEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureEvent {
    pub symbol: String,
    pub kind: EventKind,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Rally,
    Whale,
    BotBurst,
    Dip,
}

/// Multiplicative price distortion of an event, as a function of time.
#[derive(Debug, Clone, Copy)]
enum Shape {
    /// Log-price ramps to `peak` over `up`, falls to `after` over `down`,
    /// then relaxes to zero with time constant `relax`.
    Spike { t0: i64, up: i64, down: i64, peak: f64, after: f64, relax: f64 },
}

impl Shape {
    fn log_factor(&self, t: i64) -> f64 {
        match *self {
            Shape::Spike { t0, up, down, peak, after, relax } => {
                let dt = t - t0;
                if dt < 0 {
                    0.0
                } else if dt < up {
                    peak * dt as f64 / up as f64
                } else if dt < up + down {
                    let s = (dt - up) as f64 / down as f64;
                    peak + (after - peak) * s
                } else {
                    after * (-((dt - up - down) as f64) / relax).exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    t: i64,
    buy_prob: f64,
    notional: f64,
    /// Log half-spread paid by the taker: buys print above the mid,
    /// sells below it.
    spread: f64,
}

struct CoinBuilder {
    rng: ChaCha8Rng,
    start: i64,
    end: i64,
    /// Background half-spread of the coin.
    spread: f64,
    pending: Vec<Pending>,
    shapes: Vec<Shape>,
}

impl CoinBuilder {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn notional(&mut self, median: f64, sigma: f64) -> f64 {
        LogNormal::new(median.ln(), sigma).unwrap().sample(&mut self.rng)
    }

    /// Poisson arrivals on `[from, to)` at `rate(t)` trades per hour.
    fn stream(&mut self, from: i64, to: i64, rate: impl Fn(i64) -> f64, buy_prob: f64, median: f64, spread: f64) {
        let mut t = from as f64;
        let peak = (from..to).step_by(60_000).map(&rate).fold(1e-9, f64::max);
        let gap = Exp::new(peak / HOUR_MS as f64).unwrap();
        loop {
            t += gap.sample(&mut self.rng);
            let ti = t as i64;
            if ti >= to {
                break;
            }
            // Thinning keeps the arrival rate at rate(t).
            if self.rng.random::<f64>() * peak <= rate(ti) {
                let notional = self.notional(median, 1.0);
                self.pending.push(Pending { t: ti, buy_prob, notional, spread });
            }
        }
    }

    /// `n` trades spread uniformly over `[from, from + len)`.
    fn burst(&mut self, from: i64, len: i64, n: usize, buy_prob: f64, median: f64, spread: f64) {
        for _ in 0..n {
            let t = from + self.rng.random_range(0..len.max(1));
            let notional = self.notional(median, 0.8);
            self.pending.push(Pending { t, buy_prob, notional, spread });
        }
    }

    fn pump(&mut self, t0: i64) {
        let up = (self.uniform(60.0, 240.0) * 1000.0) as i64;
        let down = (self.uniform(120.0, 480.0) * 1000.0) as i64;
        let peak = self.uniform(0.25, 1.0);
        let after = self.uniform(-0.05, 0.12);
        let relax = self.uniform(6.0, 18.0) * HOUR_MS as f64;
        self.shapes.push(Shape::Spike { t0, up, down, peak, after, relax });
        // The book is swept, so takers pay a much wider spread.
        let wide = self.uniform(0.02, 0.05);
        let n_up = self.rng.random_range(100..300);
        self.burst(t0, up, n_up, 0.93, 0.15, wide);
        let n_down = self.rng.random_range(60..180);
        self.burst(t0 + up, down, n_down, 0.22, 0.1, wide);
        // Stragglers keep trading for a while after the dump.
        let tail_end = t0 + up + down + 2 * HOUR_MS;
        let base = self.uniform(150.0, 400.0);
        let from = t0 + up + down;
        self.stream(
            from,
            tail_end,
            |t| base * (-((t - from) as f64) / (0.5 * HOUR_MS as f64)).exp(),
            0.45,
            0.02,
            2.0 * self.spread,
        );
    }

    fn distractor(&mut self, t0: i64) -> EventKind {
        let kind = [EventKind::Rally, EventKind::Whale, EventKind::BotBurst, EventKind::Dip][self.rng.random_range(0..4)];
        match kind {
            // Organic rally: hours of buy-leaning flow and a steady climb.
            EventKind::Rally => {
                let len = (self.uniform(2.0, 6.0) * HOUR_MS as f64) as i64;
                let gain = self.uniform(0.06, 0.2);
                let relax = self.uniform(6.0, 24.0) * HOUR_MS as f64;
                self.shapes.push(Shape::Spike { t0, up: len, down: 1, peak: gain, after: gain, relax });
                let rate = self.uniform(20.0, 45.0);
                self.stream(t0, t0 + len, |_| rate, 0.62, 0.03, self.spread);
            }
            // Whale fill: a handful of very large buys.
            EventKind::Whale => {
                let impact = self.uniform(0.02, 0.06);
                let relax = self.uniform(2.0, 8.0) * HOUR_MS as f64;
                self.shapes.push(Shape::Spike { t0, up: 30_000, down: 1, peak: impact, after: impact, relax });
                let n = self.rng.random_range(2..6);
                let size = self.uniform(0.8, 2.5);
                self.burst(t0, 30_000, n, 0.9, size, 3.0 * self.spread);
            }
            // Market-making bot: rapid small two-sided flow, no price move.
            EventKind::BotBurst => {
                let len = (self.uniform(60.0, 300.0) * 1000.0) as i64;
                let n = self.rng.random_range(60..160);
                self.burst(t0, len, n, 0.5, 0.004, self.spread);
            }
            // Sharp dip on a sell cascade, recovered within hours.
            EventKind::Dip => {
                let down = (self.uniform(5.0, 20.0) * 60_000.0) as i64;
                let depth = -self.uniform(0.08, 0.2);
                let rec = self.uniform(1.0, 4.0) * HOUR_MS as f64;
                self.shapes.push(Shape::Spike { t0, up: down, down: 1, peak: depth, after: depth, relax: rec });
                let n = self.rng.random_range(30..90);
                self.burst(t0, down, n, 0.15, 0.03, 2.0 * self.spread);
            }
        }
        kind
    }

    fn finish(mut self, symbol: &str, p0: f64) -> Vec<TradeRecord> {
        self.pending.retain(|p| p.t >= self.start && p.t < self.end);
        self.pending.sort_by_key(|p| p.t);
        let step = Normal::new(0.0, 0.0015).unwrap();
        let mut walk = 0.0f64;
        let mut out = Vec::with_capacity(self.pending.len());
        for p in std::mem::take(&mut self.pending) {
            // Weak pull towards the base level keeps two weeks of walk bounded.
            walk += step.sample(&mut self.rng) - 0.002 * walk;
            let shape: f64 = self.shapes.iter().map(|s| s.log_factor(p.t)).sum();
            let side = if self.rng.random::<f64>() < p.buy_prob { Side::Buy } else { Side::Sell };
            let bounce = if side == Side::Buy { p.spread } else { -p.spread };
            let price = round_to(p0 * (walk + shape + bounce).exp(), 1e8).max(1e-8);
            let amount = round_to(p.notional / price, 100.0).max(0.01);
            out.push(TradeRecord {
                symbol: format!("{symbol}/BTC"),
                timestamp: p.t,
                side,
                price,
                amount,
            });
        }
        out
    }
}

fn round_to(x: f64, scale: f64) -> f64 {
    (x * scale).round() / scale
}

/// Builds the fixture deterministically from `cfg.seed`; coin `i` draws
/// from its own stream.
pub fn generate_fixture(cfg: &FixtureConfig) -> Fixture {
    assert!(cfg.n_coins <= TICKERS.len(), "at most {} coins", TICKERS.len());
    let mut coins = Vec::with_capacity(cfg.n_coins);
    let mut labels = Vec::with_capacity(cfg.n_coins);
    let mut events = Vec::new();
    for (i, &symbol) in TICKERS.iter().enumerate().take(cfg.n_coins) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        // Announcements land on the hour or half hour, three weeks apart.
        let day = EPOCH_START_MS + (i as i64) * 21 * DAY_MS + rng.random_range(0..7) * DAY_MS;
        let hour = rng.random_range(12..22i64);
        let label_ts = day + hour * HOUR_MS + if rng.random::<bool>() { 30 * 60_000 } else { 0 };
        let half = cfg.half_span_days * DAY_MS;
        let mut b = CoinBuilder {
            rng,
            start: label_ts - half,
            end: label_ts + half,
            spread: 0.0,
            pending: Vec::new(),
            shapes: Vec::new(),
        };
        let rate = cfg.base_rate * b.uniform(0.6, 1.5);
        b.spread = b.uniform(0.001, 0.003);
        let phase = b.uniform(0.0, 2.0 * PI);
        let (start, end) = (b.start, b.end);
        b.stream(
            start,
            end,
            |t| rate * (1.0 + 0.5 * (2.0 * PI * (t % DAY_MS) as f64 / DAY_MS as f64 + phase).sin()),
            0.5,
            0.015,
            b.spread,
        );
        let n_distractors = (cfg.distractors_per_day * 2.0 * cfg.half_span_days as f64).round() as usize;
        for _ in 0..n_distractors {
            // Keep unlabeled events out of the hours right around the pump.
            let t = loop {
                let t = b.rng.random_range(start..end - 6 * HOUR_MS);
                if (t - label_ts).abs() > 3 * HOUR_MS {
                    break t;
                }
            };
            let kind = b.distractor(t);
            events.push(FixtureEvent { symbol: symbol.to_string(), kind, timestamp: t });
        }
        let delay = b.rng.random_range(5_000..90_000);
        b.pump(label_ts + delay);
        let p0 = 10f64.powf(b.uniform(-5.6, -4.2));
        coins.push((symbol.to_string(), b.finish(symbol, p0)));
        labels.push(PdLabel {
            symbol: symbol.to_string(),
            group: GROUPS[i % GROUPS.len()].to_string(),
            timestamp: label_ts,
            exchange: "binance".to_string(),
        });
    }
    coins.sort_by(|a, b| a.0.cmp(&b.0));
    labels.sort_by(|a, b| a.symbol.cmp(&b.symbol));
    events.sort_by(|a, b| a.symbol.cmp(&b.symbol).then(a.timestamp.cmp(&b.timestamp)));
    Fixture { coins, labels, events }
}

/// Writes `labels.csv` and `trades/<COIN>.csv` under `dir`.
pub fn write_fixture(dir: &Path, fixture: &Fixture) -> Result<()> {
    let trades_dir = dir.join("trades");
    std::fs::create_dir_all(&trades_dir)?;
    write_labels(&dir.join("labels.csv"), &fixture.labels)?;
    for (coin, trades) in &fixture.coins {
        write_trades(&trades_dir.join(format!("{coin}.csv")), trades)?;
    }
    Ok(())
}
