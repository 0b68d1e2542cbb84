use serde::{Deserialize, Serialize};

use super::{DetectorError, Result};

/// Spike thresholds in percent of the trailing moving average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub volume_spike_pct: f64,
    pub price_spike_pct: f64,
    /// Trailing window, in hours, of the moving averages.
    pub ma_window: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            volume_spike_pct: 300.0,
            price_spike_pct: 105.0,
            ma_window: 12,
        }
    }
}

/// Flags hour `t` when both `volume[t] > V% * MA_vol(t)` and
/// `price[t] > S% * MA_price(t)`, each MA being the mean of the previous
/// `ma_window` hours (hour `t` excluded). The warm-up hours are never flagged.
pub fn kamps_benchmark(price: &[f64], volume: &[f64], cfg: BenchmarkConfig) -> Result<Vec<bool>> {
    if price.len() != volume.len() {
        return Err(DetectorError::Misaligned(price.len(), volume.len()));
    }
    if cfg.ma_window == 0 || cfg.volume_spike_pct < 0.0 || cfg.price_spike_pct < 0.0 {
        return Err(DetectorError::InvalidParameter(format!("{cfg:?}")));
    }
    let w = cfg.ma_window;
    let (vf, pf) = (cfg.volume_spike_pct / 100.0, cfg.price_spike_pct / 100.0);
    let mut flags = vec![false; price.len()];
    let (mut sum_p, mut sum_v) = (0.0, 0.0);
    for t in 0..price.len() {
        if t >= w {
            let (ma_p, ma_v) = (sum_p / w as f64, sum_v / w as f64);
            flags[t] = volume[t] > vf * ma_v && price[t] > pf * ma_p;
            sum_p -= price[t - w];
            sum_v -= volume[t - w];
        }
        sum_p += price[t];
        sum_v += volume[t];
    }
    Ok(flags)
}
