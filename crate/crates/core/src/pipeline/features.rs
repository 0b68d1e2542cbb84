use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::paths::{normalize_unit_interval, window_starts, PathSeries, WindowConfig};
use crate::randsig::{randomized_signature, ReservoirSpec};
use crate::tensoralg::{flatten_features, path_signature};

/// Where channels are rescaled onto `[0, 1]` before signatures are taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationScope {
    /// Once over the whole analysis interval of a coin.
    #[default]
    Interval,
    /// Separately inside every window.
    Window,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMethod {
    Exact { degree: usize, include_constant: bool },
    Randomized(ReservoirSpec),
}

impl FeatureMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            FeatureMethod::Exact { .. } => "exact",
            FeatureMethod::Randomized(_) => "randomized",
        }
    }

    fn transform(&self, window: &PathSeries) -> Result<Vec<f64>> {
        Ok(match self {
            FeatureMethod::Exact {
                degree,
                include_constant,
            } => flatten_features(&path_signature(window, *degree)?, *include_constant),
            FeatureMethod::Randomized(spec) => randomized_signature(spec, window)?,
        })
    }
}

/// One feature row per window of one coin.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub symbol: String,
    pub method: &'static str,
    pub rows: Vec<Vec<f64>>,
    /// Timestamp (ms) of the last trade in each window.
    pub window_end_timestamps: Vec<i64>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Slides `cfg` over `series` and maps every window through `method`.
/// The series must carry per-sample timestamps.
pub fn featurize_windows(
    symbol: &str,
    series: &PathSeries,
    cfg: WindowConfig,
    method: &FeatureMethod,
    scope: NormalizationScope,
) -> Result<FeatureMatrix> {
    let stamps = series
        .timestamps()
        .ok_or_else(|| PipelineError::Config("series has no timestamps".into()))?;
    // Clamped tail windows repeat the final start; keep one copy.
    let mut starts = window_starts(series.len(), cfg)?;
    starts.dedup();
    let base = match scope {
        NormalizationScope::Interval => normalize_unit_interval(series, &[]),
        _ => series.clone(),
    };
    let rows = starts
        .par_iter()
        .map(|&s| {
            let mut window = base.slice(s, cfg.window)?;
            if scope == NormalizationScope::Window {
                window = normalize_unit_interval(&window, &[]);
            }
            let row = method.transform(&window)?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(PipelineError::Config(format!(
                    "non-finite feature in window starting at sample {s}"
                )));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let window_end_timestamps = starts
        .iter()
        .map(|&s| stamps[s + cfg.window - 1] as i64)
        .collect();
    Ok(FeatureMatrix {
        symbol: symbol.to_string(),
        method: method.tag(),
        rows,
        window_end_timestamps,
    })
}
