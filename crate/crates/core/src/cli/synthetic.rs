use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CliError, Result};
use crate::paths::PathSeries;
use crate::pipeline::MethodName;
use crate::randsig::{randomized_signature, sample_reservoir, ReservoirParams, ReservoirSpec};
use crate::readout::{
    auc, fit_logistic, pr_points, predict_labels, predict_proba, quantile_accuracy, roc_points,
    CurvePoint, FitOptions, Standardizer,
};
use crate::synth::{make_dataset, LabeledPath, SynthConfig, SynthDataset};
use crate::tensoralg::{flatten_features, path_signature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticStudyConfig {
    pub data: SynthConfig,
    pub train_fraction: f64,
    pub exact_degree: usize,
    /// Reservoir over the three `(t, X, dX)` channels.
    pub reservoir: ReservoirParams,
    pub methods: Vec<MethodName>,
    pub fit: FitOptions,
    pub quantile_bins: usize,
}

impl Default for SyntheticStudyConfig {
    fn default() -> Self {
        Self {
            data: SynthConfig::default(),
            train_fraction: 0.8,
            exact_degree: 3,
            reservoir: ReservoirParams::simulated_preset(3, 0),
            methods: vec![MethodName::Exact, MethodName::Randomized],
            fit: FitOptions::default(),
            quantile_bins: 10,
        }
    }
}

impl SyntheticStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.exact_degree == 0 {
            return bad("exact_degree must be at least 1".into());
        }
        if self.reservoir.input_dim != 3 {
            return bad("synthetic reservoir input_dim must be 3 (t, X, dX)".into());
        }
        if self.methods.is_empty() || self.quantile_bins == 0 {
            return bad("methods must be non-empty and quantile_bins >= 1".into());
        }
        if self.fit.max_iters == 0 || !(self.fit.l2 >= 0.0) || !(self.fit.tol > 0.0) {
            return bad(format!("invalid fit options {:?}", self.fit));
        }
        Ok(())
    }
}

/// Test-set performance of one feature method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticReport {
    pub method: MethodName,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub mean_accuracy: f64,
    pub train_accuracy: f64,
    /// Decile of the highest model outputs.
    pub top10_accuracy: f64,
    /// Decile of the lowest model outputs.
    pub bottom10_accuracy: f64,
    pub quantile_accuracies: Vec<f64>,
    pub auc: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub roc: Vec<CurvePoint>,
    #[serde(skip)]
    pub pr: Vec<CurvePoint>,
}

enum Featurizer {
    Exact(usize),
    Randomized(ReservoirSpec),
}

impl Featurizer {
    fn apply(&self, s: &PathSeries) -> Result<Vec<f64>> {
        Ok(match self {
            Featurizer::Exact(n) => flatten_features(&path_signature(s, *n)?, false),
            Featurizer::Randomized(spec) => randomized_signature(spec, s)?,
        })
    }

    fn matrix(&self, rows: &[LabeledPath]) -> Result<Vec<Vec<f64>>> {
        rows.par_iter().map(|p| self.apply(&p.series)).collect()
    }
}

fn accuracy(labels: &[u8], predicted: &[u8]) -> f64 {
    let hits = labels.iter().zip(predicted).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

/// Featurizes, standardizes on the training split, fits the logistic
/// readout and scores the test split.
pub fn evaluate_method(
    data: &SynthDataset,
    method: MethodName,
    cfg: &SyntheticStudyConfig,
) -> Result<SyntheticReport> {
    let f = match method {
        MethodName::Exact => Featurizer::Exact(cfg.exact_degree),
        MethodName::Randomized => Featurizer::Randomized(sample_reservoir(&cfg.reservoir)?),
    };
    let (train_x, test_x) = (f.matrix(&data.train)?, f.matrix(&data.test)?);
    let train_y: Vec<u8> = data.train.iter().map(|p| p.label).collect();
    let test_y: Vec<u8> = data.test.iter().map(|p| p.label).collect();
    let scaler = Standardizer::fit(&train_x)?;
    let (train_x, test_x) = (scaler.transform(&train_x), scaler.transform(&test_x));
    let model = fit_logistic(&train_x, &train_y, cfg.fit)?;
    let train_p = predict_proba(&model, &train_x)?;
    let test_p = predict_proba(&model, &test_x)?;
    let quantiles = quantile_accuracy(&test_y, &test_p, cfg.quantile_bins)?;
    let truth: Vec<bool> = test_y.iter().map(|&y| y == 1).collect();
    let roc = roc_points(&truth, &test_p)?;
    Ok(SyntheticReport {
        method,
        n_train: train_x.len(),
        n_test: test_x.len(),
        n_features: train_x.first().map_or(0, Vec::len),
        mean_accuracy: accuracy(&test_y, &predict_labels(&test_p)),
        train_accuracy: accuracy(&train_y, &predict_labels(&train_p)),
        top10_accuracy: *quantiles.last().expect("bins >= 1"),
        bottom10_accuracy: quantiles[0],
        quantile_accuracies: quantiles,
        auc: auc(&roc),
        iterations: model.iterations,
        converged: model.converged,
        pr: pr_points(&truth, &test_p)?,
        roc,
    })
}

/// Generates the dataset once and evaluates every configured method on it.
pub fn run_synthetic_study(cfg: &SyntheticStudyConfig) -> Result<Vec<SyntheticReport>> {
    cfg.validate()?;
    let data = make_dataset(&cfg.data, cfg.train_fraction)?;
    cfg.methods.iter().map(|&m| evaluate_method(&data, m, cfg)).collect()
}
