use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use super::trades::{HourlyBars, PdLabel};
use super::{PipelineError, Result};
use crate::detectors::{
    fit_isolation_forest, fit_mcd, kamps_benchmark, label_outliers, mahalanobis_scores,
    BenchmarkConfig, IsolationForestParams, McdParams,
};
use crate::readout::{f1_score, MetricsReport};

pub const HOUR_MS: i64 = 3_600_000;

/// UTC hour index of a millisecond timestamp.
pub fn hour_of(timestamp_ms: i64) -> i64 {
    timestamp_ms.div_euclid(HOUR_MS)
}

/// Total width of the evaluation interval around each label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum IntervalDays {
    Three,
    Six,
    Fourteen,
}

impl IntervalDays {
    pub const ALL: [IntervalDays; 3] = [IntervalDays::Three, IntervalDays::Six, IntervalDays::Fourteen];

    pub fn days(self) -> u32 {
        match self {
            IntervalDays::Three => 3,
            IntervalDays::Six => 6,
            IntervalDays::Fourteen => 14,
        }
    }

    /// Hours on each side of the label hour.
    pub fn half_width_hours(self) -> i64 {
        i64::from(self.days()) * 12
    }
}

impl TryFrom<u32> for IntervalDays {
    type Error = String;
    fn try_from(d: u32) -> std::result::Result<Self, String> {
        match d {
            3 => Ok(IntervalDays::Three),
            6 => Ok(IntervalDays::Six),
            14 => Ok(IntervalDays::Fourteen),
            other => Err(format!("interval must be 3, 6 or 14 days, got {other}")),
        }
    }
}

impl From<IntervalDays> for u32 {
    fn from(d: IntervalDays) -> u32 {
        d.days()
    }
}

impl fmt::Display for IntervalDays {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.days())
    }
}

/// Flags over the contiguous hours `first_hour..first_hour + flags.len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HourlyFlags {
    pub first_hour: i64,
    pub flags: Vec<bool>,
}

impl HourlyFlags {
    pub fn covers(&self, hour: i64) -> bool {
        hour >= self.first_hour && hour < self.first_hour + self.flags.len() as i64
    }

    /// Unflagged outside the covered range.
    pub fn get(&self, hour: i64) -> bool {
        self.covers(hour) && self.flags[(hour - self.first_hour) as usize]
    }
}

/// An hour is flagged when any window ending inside it is flagged.
pub fn hourly_aggregate(window_flags: &[bool], window_end_timestamps: &[i64]) -> Result<HourlyFlags> {
    if window_flags.len() != window_end_timestamps.len() {
        return Err(PipelineError::Config(format!(
            "{} window flags for {} timestamps",
            window_flags.len(),
            window_end_timestamps.len()
        )));
    }
    let Some(first) = window_end_timestamps.iter().map(|&t| hour_of(t)).min() else {
        return Ok(HourlyFlags::default());
    };
    let last = window_end_timestamps.iter().map(|&t| hour_of(t)).max().unwrap_or(first);
    let mut flags = vec![false; (last - first + 1) as usize];
    for (&f, &t) in window_flags.iter().zip(window_end_timestamps) {
        flags[(hour_of(t) - first) as usize] |= f;
    }
    Ok(HourlyFlags {
        first_hour: first,
        flags,
    })
}

/// Flag and ground truth of one evaluated hour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HourRecord {
    pub symbol: String,
    pub hour: i64,
    pub flagged: bool,
    pub label: bool,
}

/// Scores flags against labels over the interval hours around every label.
/// Positives are the label hours; every other interval hour is negative.
/// Records come out sorted by symbol and hour.
pub fn evaluate(
    flags: &BTreeMap<String, HourlyFlags>,
    labels: &[PdLabel],
    interval: IntervalDays,
) -> Result<(MetricsReport, Vec<HourRecord>)> {
    let half = interval.half_width_hours();
    let mut hours: BTreeMap<&str, BTreeSet<i64>> = BTreeMap::new();
    let mut positives: BTreeSet<(&str, i64)> = BTreeSet::new();
    for l in labels {
        let h = hour_of(l.timestamp);
        if !flags.get(&l.symbol).is_some_and(|f| f.covers(h)) {
            return Err(PipelineError::LabelOutsideCoverage {
                symbol: l.symbol.clone(),
                timestamp: l.timestamp,
            });
        }
        hours.entry(&l.symbol).or_default().extend(h - half..=h + half);
        positives.insert((&l.symbol, h));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut records = Vec::new();
    for (symbol, set) in hours {
        let coin = &flags[symbol];
        for hour in set {
            let flagged = coin.get(hour);
            let label = positives.contains(&(symbol, hour));
            match (flagged, label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
            records.push(HourRecord {
                symbol: symbol.to_string(),
                hour,
                flagged,
                label,
            });
        }
    }
    Ok((MetricsReport::from_counts(tp, fp, tn, fn_), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxF1 {
    pub value: f64,
    pub precision: f64,
    pub recall: f64,
    pub param: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub detector: String,
    pub feature_method: String,
    pub interval_days: u32,
    pub sweep: Vec<SweepPoint>,
    pub max_f1: MaxF1,
    /// Per-hour outcome at the best sweep point.
    #[serde(skip)]
    pub hours: Vec<HourRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorKind {
    #[serde(rename = "iforest")]
    IsolationForest(IsolationForestParams),
    Mcd(McdParams),
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::IsolationForest(_) => "iforest",
            DetectorKind::Mcd(_) => "mcd",
        }
    }

    /// Fits on the pooled rows and scores them; higher is more anomalous.
    pub fn fit_score(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(match self {
            DetectorKind::IsolationForest(p) => fit_isolation_forest(rows, *p)?.scores(rows)?,
            DetectorKind::Mcd(p) => mahalanobis_scores(&fit_mcd(rows, *p)?, rows)?,
        })
    }
}

struct Sweep {
    points: Vec<SweepPoint>,
    best: Option<(usize, Vec<HourRecord>)>,
}

impl Sweep {
    fn new() -> Self {
        Self {
            points: Vec::new(),
            best: None,
        }
    }

    fn push(&mut self, param: f64, m: MetricsReport, hours: Vec<HourRecord>) {
        let f1 = f1_score(m.precision, m.recall);
        let i = self.points.len();
        self.points.push(SweepPoint {
            param,
            precision: m.precision,
            recall: m.recall,
            f1,
        });
        // First maximum wins.
        if self.best.as_ref().is_none_or(|(b, _)| f1 > self.points[*b].f1) {
            self.best = Some((i, hours));
        }
    }

    fn finish(self, detector: &str, feature_method: &str, interval: IntervalDays) -> EvaluationReport {
        let (i, hours) = self.best.expect("sweep has at least one point");
        let p = self.points[i];
        EvaluationReport {
            detector: detector.to_string(),
            feature_method: feature_method.to_string(),
            interval_days: interval.days(),
            max_f1: MaxF1 {
                value: p.f1,
                precision: p.precision,
                recall: p.recall,
                param: p.param,
            },
            sweep: self.points,
            hours,
        }
    }
}

/// Fits `detector` once on the windows of every coin pooled together, then
/// for each contamination rate flags the top windows, aggregates to hours
/// and evaluates.
pub fn pr_sweep_detector(
    features: &[FeatureMatrix],
    labels: &[PdLabel],
    detector: &DetectorKind,
    contamination_grid: &[f64],
    interval: IntervalDays,
) -> Result<EvaluationReport> {
    if contamination_grid.is_empty() || contamination_grid.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
        return Err(PipelineError::Config(
            "contamination grid must be non-empty with values in (0, 1)".into(),
        ));
    }
    let method = features.first().map_or("none", |f| f.method);
    let pooled: Vec<Vec<f64>> = features.iter().flat_map(|f| f.rows.iter().cloned()).collect();
    let scores = detector.fit_score(&pooled)?;
    let mut sweep = Sweep::new();
    for &c in contamination_grid {
        let flags = label_outliers(&scores, c, true);
        let mut hourly = BTreeMap::new();
        let mut offset = 0;
        for f in features {
            let part = &flags[offset..offset + f.len()];
            offset += f.len();
            hourly.insert(f.symbol.clone(), hourly_aggregate(part, &f.window_end_timestamps)?);
        }
        let (m, hours) = evaluate(&hourly, labels, interval)?;
        sweep.push(c, m, hours);
    }
    Ok(sweep.finish(detector.name(), method, interval))
}

/// Sweeps the spike thresholds jointly along `f -> (300 f %, 105 f %)` for
/// `f` in `steps` evenly spaced values from 0 to 1 inclusive.
pub fn pr_sweep_benchmark(
    bars: &BTreeMap<String, HourlyBars>,
    labels: &[PdLabel],
    steps: usize,
    ma_window: usize,
    interval: IntervalDays,
) -> Result<EvaluationReport> {
    if steps < 2 {
        return Err(PipelineError::Config("benchmark sweep needs at least 2 steps".into()));
    }
    let best = BenchmarkConfig::default();
    let mut sweep = Sweep::new();
    for s in 0..steps {
        let f = if s + 1 == steps { 1.0 } else { s as f64 / (steps - 1) as f64 };
        let cfg = BenchmarkConfig {
            volume_spike_pct: best.volume_spike_pct * f,
            price_spike_pct: best.price_spike_pct * f,
            ma_window,
        };
        let mut hourly = BTreeMap::new();
        for (symbol, b) in bars {
            let flags = kamps_benchmark(&b.close, &b.volume, cfg)?;
            hourly.insert(
                symbol.clone(),
                HourlyFlags {
                    first_hour: b.first_hour,
                    flags,
                },
            );
        }
        let (m, hours) = evaluate(&hourly, labels, interval)?;
        sweep.push(f, m, hours);
    }
    Ok(sweep.finish("benchmark", "none", interval))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(symbol: &str, ts: i64) -> PdLabel {
        PdLabel {
            symbol: symbol.into(),
            group: "g".into(),
            timestamp: ts,
            exchange: "x".into(),
        }
    }

    fn coverage(first: i64, flags: Vec<bool>) -> BTreeMap<String, HourlyFlags> {
        BTreeMap::from([("A".to_string(), HourlyFlags { first_hour: first, flags })])
    }

    #[test]
    fn aggregation_is_any() {
        let h = hourly_aggregate(&[true, false], &[100, 3_600_100]).unwrap();
        assert_eq!(h, HourlyFlags { first_hour: 0, flags: vec![true, false] });
        let quiet = hourly_aggregate(&[false; 10], &[5; 10]).unwrap();
        assert_eq!(quiet.flags, vec![false]);
        let mut one = [false; 10];
        one[4] = true;
        assert_eq!(hourly_aggregate(&one, &[5; 10]).unwrap().flags, vec![true]);
        let gap = hourly_aggregate(&[true, true], &[0, 3 * HOUR_MS]).unwrap();
        assert_eq!(gap.flags, vec![true, false, false, true]);
        assert!(hourly_aggregate(&[true], &[]).is_err());
    }

    #[test]
    fn evaluation_edge_cases() {
        let ts = 100 * HOUR_MS + 5;
        let n = 73;
        let mut exact = vec![false; n];
        exact[36] = true;
        let (m, rec) = evaluate(&coverage(64, exact), &[label("A", ts)], IntervalDays::Three).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(rec.len(), n);

        let (m, _) = evaluate(&coverage(64, vec![false; n]), &[label("A", ts)], IntervalDays::Three).unwrap();
        assert_eq!(m.recall, 0.0);

        let (m, _) = evaluate(&coverage(64, vec![true; n]), &[label("A", ts)], IntervalDays::Three).unwrap();
        assert_eq!(m.recall, 1.0);
        assert!((m.precision - 1.0 / 73.0).abs() < 1e-15);

        assert!(matches!(
            evaluate(&coverage(0, vec![true; 10]), &[label("A", ts)], IntervalDays::Three),
            Err(PipelineError::LabelOutsideCoverage { .. })
        ));
        assert!(evaluate(&coverage(64, vec![true; n]), &[label("B", ts)], IntervalDays::Three).is_err());
    }

    #[test]
    fn interval_days_serde() {
        assert_eq!(serde_json::to_string(&IntervalDays::Six).unwrap(), "6");
        assert_eq!(serde_json::from_str::<IntervalDays>("14").unwrap(), IntervalDays::Fourteen);
        assert!(serde_json::from_str::<IntervalDays>("7").is_err());
        assert_eq!(IntervalDays::Three.half_width_hours(), 36);
    }

    #[test]
    fn contamination_half_on_separating_toy() {
        // Six windows in six hours of one coin; the label sits in hour 2.
        let fm = FeatureMatrix {
            symbol: "A".into(),
            method: "exact",
            rows: vec![vec![0.0]; 6],
            window_end_timestamps: (0..6).map(|h| h * HOUR_MS).collect(),
        };
        let labels = [label("A", 2 * HOUR_MS)];
        let scores = [0.1, 0.2, 0.9, 0.3, 0.4, 0.5];
        let flags = label_outliers(&scores, 0.5, true);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 3);
        let h = hourly_aggregate(&flags, &fm.window_end_timestamps).unwrap();
        let (m, _) = evaluate(&BTreeMap::from([("A".to_string(), h)]), &labels, IntervalDays::Three).unwrap();
        // Brute force: flagged hours {2, 4, 5}; one of three is the label.
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn benchmark_sweep_endpoints() {
        let mut close = vec![1.0; 48];
        let mut volume = vec![1.0; 48];
        close[30] = 1.2;
        volume[30] = 10.0;
        let bars = BTreeMap::from([("A".to_string(), HourlyBars { first_hour: 0, close, volume })]);
        let labels = [label("A", 30 * HOUR_MS)];
        let r = pr_sweep_benchmark(&bars, &labels, 5, 12, IntervalDays::Three).unwrap();
        assert_eq!(r.sweep.len(), 5);
        assert_eq!(r.sweep[0].param, 0.0);
        assert_eq!(r.sweep[0].recall, 1.0);
        assert_eq!(r.sweep.last().unwrap().param, 1.0);
        assert_eq!(r.max_f1.value, 1.0);
        let best = r.sweep.iter().map(|p| p.f1).fold(0.0, f64::max);
        assert_eq!(r.max_f1.value, best);
        assert!(pr_sweep_benchmark(&bars, &labels, 1, 12, IntervalDays::Three).is_err());
    }
}
