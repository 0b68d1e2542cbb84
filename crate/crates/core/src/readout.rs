//! Logistic-regression readout and classification metrics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReadoutError {
    #[error("empty training set")]
    Empty,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} has {got} features, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("labels and rows differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {0} is not binary")]
    NonBinaryLabel(u8),
    #[error("both classes must be present")]
    DegenerateLabels,
    #[error("no positive labels")]
    NoPositives,
    #[error("need at least {bins} samples, got {n}")]
    TooFewSamples { n: usize, bins: usize },
}

pub type Result<T> = std::result::Result<T, ReadoutError>;

fn check_matrix(rows: &[Vec<f64>], width: Option<usize>) -> Result<usize> {
    let m = width.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(ReadoutError::DimensionMismatch {
                row: i,
                expected: m,
                got: r.len(),
            });
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(ReadoutError::NonFinite { row: i, col: j });
        }
    }
    Ok(m)
}

/// Per-column z-scoring fitted on a training matrix. Constant columns are
/// centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(ReadoutError::Empty);
        }
        let m = check_matrix(rows, None)?;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; m];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(a, v)| *a += v / n);
        }
        let mut var = vec![0.0; m];
        for r in rows {
            for ((s, v), mu) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - mu) * (v - mu) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iters: 5_000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy plus `(l2 / 2) |w|^2` and its gradient with respect
/// to `(w, b)`; the bias gradient is the last entry.
pub fn loss_and_gradient(
    features: &[Vec<f64>],
    labels: &[u8],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>) {
    let n = features.len() as f64;
    let m = weights.len();
    let mut grad = vec![0.0; m + 1];
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + bias;
        let y = f64::from(y);
        // -[y log σ(z) + (1-y) log(1-σ(z))] = softplus(z) - y z
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        grad[..m].iter_mut().zip(x).for_each(|(g, a)| *g += r * a);
        grad[m] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    grad[..m].iter_mut().zip(weights).for_each(|(g, w)| *g += l2 * w);
    (loss, grad)
}

/// Full-batch gradient descent with Armijo backtracking from zero weights.
/// Trial steps start from the Barzilai-Borwein estimate of the previous
/// iteration.
pub fn fit_logistic(features: &[Vec<f64>], labels: &[u8], opts: FitOptions) -> Result<LogisticModel> {
    if features.is_empty() {
        return Err(ReadoutError::Empty);
    }
    if features.len() != labels.len() {
        return Err(ReadoutError::LengthMismatch(features.len(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(ReadoutError::NonBinaryLabel(bad));
    }
    let m = check_matrix(features, None)?;
    let mut params = vec![0.0; m + 1];
    let (mut loss, mut grad) = loss_and_gradient(features, labels, &params[..m], 0.0, opts.l2);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let gnorm_inf = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gnorm_inf < opts.tol {
            converged = true;
            break;
        }
        let gsq: f64 = grad.iter().map(|g| g * g).sum();
        let mut t = step;
        let (new_params, new_loss, new_grad) = loop {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - t * g).collect();
            let (l, g) = loss_and_gradient(features, labels, &trial[..m], trial[m], opts.l2);
            if l <= loss - 1e-4 * t * gsq || t < 1e-12 {
                break (trial, l, g);
            }
            t *= 0.5;
        };
        // Barzilai-Borwein step for the next trial.
        let (mut sy, mut ss) = (0.0, 0.0);
        for i in 0..=m {
            let s = new_params[i] - params[i];
            sy += s * (new_grad[i] - grad[i]);
            ss += s * s;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-6, 1e6) } else { (2.0 * t).min(1e6) };
        if loss - new_loss <= f64::EPSILON * loss.abs() && t < 1e-12 {
            params = new_params;
            grad = new_grad;
            iterations += 1;
            break;
        }
        params = new_params;
        loss = new_loss;
        grad = new_grad;
        iterations += 1;
    }
    if !converged {
        converged = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())) < opts.tol;
    }
    let bias = params.pop().unwrap_or(0.0);
    Ok(LogisticModel {
        weights: params,
        bias,
        iterations,
        converged,
    })
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() + self.bias
    }
}

pub fn predict_proba(model: &LogisticModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_matrix(features, Some(model.weights.len()))?;
    Ok(features.iter().map(|x| sigmoid(model.decision(x))).collect())
}

/// Rounds probabilities at one half.
pub fn predict_labels(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= 0.5)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 from precision and recall; zero when either is zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision > 0.0 && recall > 0.0 {
        2.0 / (1.0 / precision + 1.0 / recall)
    } else {
        0.0
    }
}

impl MetricsReport {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

pub fn classification_metrics(labels: &[bool], predicted: &[bool]) -> Result<MetricsReport> {
    if labels.len() != predicted.len() {
        return Err(ReadoutError::LengthMismatch(labels.len(), predicted.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&y, &p) in labels.iter().zip(predicted) {
        match (y, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}

/// Confusion counts when flagging every score `>= threshold`, for each
/// distinct threshold in descending order.
fn threshold_sweep(labels: &[bool], scores: &[f64]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((thr, tp, fp));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// ROC points `(fp rate, tp rate)` from `(0, 0)` to `(1, 1)`.
pub fn roc_points(labels: &[bool], scores: &[f64]) -> Result<Vec<CurvePoint>> {
    if labels.len() != scores.len() {
        return Err(ReadoutError::LengthMismatch(labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&y| y).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(ReadoutError::DegenerateLabels);
    }
    let mut pts = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    pts.extend(threshold_sweep(labels, scores).into_iter().map(|(thr, tp, fp)| CurvePoint {
        threshold: thr,
        x: ratio(fp, neg),
        y: ratio(tp, pos),
    }));
    Ok(pts)
}

/// Trapezoidal area under a curve given in increasing `x`.
pub fn auc(points: &[CurvePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * 0.5 * (w[0].y + w[1].y))
        .sum()
}

/// Precision-recall points as `(recall, precision)`, one per distinct
/// threshold in descending order.
pub fn pr_points(labels: &[bool], scores: &[f64]) -> Result<Vec<CurvePoint>> {
    if labels.len() != scores.len() {
        return Err(ReadoutError::LengthMismatch(labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&y| y).count() as u64;
    if pos == 0 {
        return Err(ReadoutError::NoPositives);
    }
    Ok(threshold_sweep(labels, scores)
        .into_iter()
        .map(|(thr, tp, fp)| CurvePoint {
            threshold: thr,
            x: ratio(tp, pos),
            y: ratio(tp, tp + fp),
        })
        .collect())
}

/// Largest F1 over `(recall, precision)` points, with the point attaining it.
pub fn max_f1(points: &[CurvePoint]) -> Option<(f64, CurvePoint)> {
    points
        .iter()
        .map(|p| (f1_score(p.y, p.x), *p))
        .fold(None, |best, cur| match best {
            Some((b, _)) if b >= cur.0 => best,
            _ => Some(cur),
        })
}

/// Sorts by score, cuts into `bins` groups of (nearly) equal size and
/// reports the accuracy of rounding inside each group, lowest scores first.
pub fn quantile_accuracy(labels: &[u8], scores: &[f64], bins: usize) -> Result<Vec<f64>> {
    let n = labels.len();
    if n != scores.len() {
        return Err(ReadoutError::LengthMismatch(n, scores.len()));
    }
    if bins == 0 || n < bins {
        return Err(ReadoutError::TooFewSamples { n, bins });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    Ok((0..bins)
        .map(|b| {
            let (lo, hi) = (b * n / bins, (b + 1) * n / bins);
            let hits = order[lo..hi]
                .iter()
                .filter(|&&i| u8::from(scores[i] >= 0.5) == labels[i])
                .count();
            hits as f64 / (hi - lo) as f64
        })
        .collect())
}

/// Writes `threshold,x,y` rows with the given axis names.
pub fn write_curve_csv(path: &Path, x_name: &str, y_name: &str, points: &[CurvePoint]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "threshold,{x_name},{y_name}")?;
    for p in points {
        writeln!(w, "{},{},{}", p.threshold, p.x, p.y)?;
    }
    w.flush()
}
