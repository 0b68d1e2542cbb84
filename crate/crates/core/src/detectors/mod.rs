//! Unsupervised outlier scoring: isolation forest, Minimum Covariance
//! Determinant and the price/volume spike rule used as a benchmark.

mod benchmark;
mod iforest;
mod mcd;

pub use benchmark::{kamps_benchmark, BenchmarkConfig};
pub use iforest::{
    avg_path_length_c, fit_isolation_forest, score_from_mean_depth, IsolationForestModel,
    IsolationForestParams, Node,
};
pub use mcd::{fit_mcd, fit_mcd_traced, mahalanobis_scores, McdModel, McdParams};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("feature matrix has no columns")]
    NoFeatures,
    #[error("row {row} has {got} features, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("covariance estimate is singular")]
    SingularCovariance,
    #[error("MCD needs more samples than squared features: n = {n}, m = {m}")]
    InsufficientSamples { n: usize, m: usize },
    #[error("support of {h} points does not exceed {m} features")]
    SupportTooSmall { h: usize, m: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series lengths differ: {0} vs {1}")]
    Misaligned(usize, usize),
}

pub type Result<T> = std::result::Result<T, DetectorError>;

pub(crate) fn check_rows(rows: &[Vec<f64>], width: Option<usize>) -> Result<usize> {
    let m = width.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(DetectorError::DimensionMismatch {
                row: i,
                expected: m,
                got: r.len(),
            });
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(DetectorError::NonFinite { row: i, col: j });
        }
    }
    Ok(m)
}

/// `ceil(n * fraction)`, tolerant to representation error in the product
/// (`100 * 0.07` must give 7, not 8).
pub(crate) fn ceil_fraction(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 * x.abs().max(1.0) { r } else { x.ceil() };
    (k.max(0.0) as usize).min(n)
}

/// Flags the `ceil(n * contamination)` most anomalous scores. Among equal
/// scores the lower index is flagged first.
pub fn label_outliers(scores: &[f64], contamination: f64, higher_is_anomalous: bool) -> Vec<bool> {
    let n = scores.len();
    let k = ceil_fraction(n, contamination.clamp(0.0, 1.0));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let c = if higher_is_anomalous {
            scores[b].total_cmp(&scores[a])
        } else {
            scores[a].total_cmp(&scores[b])
        };
        c.then(a.cmp(&b))
    });
    let mut flags = vec![false; n];
    for &i in &order[..k] {
        flags[i] = true;
    }
    flags
}
