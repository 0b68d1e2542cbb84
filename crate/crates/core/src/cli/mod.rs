//! Command-line front end: configuration, subcommands and report output.

mod synthetic;

pub use synthetic::{evaluate_method, run_synthetic_study, SyntheticReport, SyntheticStudyConfig};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::DetectorError;
use crate::paths::{PathError, PathSeries};
use crate::pipeline::{
    build_channels, featurize_windows, hourly_bars, load_coin_trades, load_labels, prepare_interval,
    pr_sweep_benchmark, pr_sweep_detector, run_crypto_study, CryptoStudyConfig, DetectorKind,
    DetectorName, EvaluationReport, FeatureMatrix, FeatureMethod, IntervalDays, MethodName,
    PipelineError,
};
use crate::randsig::{sample_reservoir, ReservoirError, ReservoirParams};
use crate::readout::{write_curve_csv, ReadoutError};
use crate::synth::{make_dataset, streak_histogram, write_dataset_csv, write_histogram_csv, SynthError};
use crate::tensoralg::TensorError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    ConfigFile {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Synthetic,
    Crypto,
}

/// Named hyperparameter bundles for the reservoirs of the two studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Preset {
    #[serde(rename = "table1-simulated")]
    #[value(name = "table1-simulated")]
    Table1Simulated,
    #[serde(rename = "table1-crypto")]
    #[value(name = "table1-crypto")]
    Table1Crypto,
}

/// Everything a run needs. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub study: Option<Study>,
    pub preset: Option<Preset>,
    /// When set, replaces every seed in the sub-configurations.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub synthetic: SyntheticStudyConfig,
    pub crypto: CryptoStudyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            study: None,
            preset: None,
            seed: None,
            threads: None,
            out_dir: PathBuf::from("out"),
            synthetic: SyntheticStudyConfig::default(),
            crypto: CryptoStudyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| CliError::ConfigFile {
            path: path.display().to_string(),
            source,
        })
    }

    /// Applies the preset and the global seed to the sub-configurations.
    pub fn resolve(&mut self) {
        match self.preset {
            Some(Preset::Table1Simulated) => {
                let seed = self.synthetic.reservoir.seed;
                self.synthetic.reservoir = ReservoirParams::simulated_preset(3, seed);
            }
            Some(Preset::Table1Crypto) => {
                let seed = self.crypto.reservoir.seed;
                self.crypto.reservoir = ReservoirParams::crypto_preset(4, seed);
            }
            None => {}
        }
        if let Some(s) = self.seed {
            self.synthetic.data.seed = s;
            self.synthetic.reservoir.seed = s;
            self.crypto.reservoir.seed = s;
            self.crypto.iforest.seed = s;
            self.crypto.mcd.seed = s;
        }
    }

    pub fn validate(&self, study: Study) -> Result<()> {
        if let Some(s) = self.study {
            if s != study {
                return Err(CliError::Config(format!("config is for the {s:?} study")));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        match study {
            Study::Synthetic => self.synthetic.validate(),
            Study::Crypto => Ok(self.crypto.validate()?),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sigad", version, about = "Signature features for market anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic GBM dataset and its streak histogram.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of paths (half genuine, half suppressed).
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Fit the logistic readout on synthetic signature features.
    RunSynthetic {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Run the pump-and-dump study over every requested combination.
    RunCrypto {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        detector: Option<DetectorArg>,
        #[arg(long, value_parser = parse_interval)]
        interval: Option<IntervalDays>,
    },
    /// Write per-coin window features for one interval.
    Featurize {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "randomized")]
        method: MethodArg,
        /// Selects the signature degree for exact features.
        #[arg(long, value_enum, default_value = "iforest")]
        detector: DetectorArg,
        #[arg(long, value_parser = parse_interval, default_value = "3")]
        interval: IntervalDays,
    },
    /// Score saved features (or hourly bars, for the benchmark) against labels.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Directory of feature files written by `featurize`.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "randomized")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "iforest")]
        detector: DetectorArg,
        #[arg(long, value_parser = parse_interval, default_value = "3")]
        interval: IntervalDays,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory of `<COIN>.csv` trade files.
    #[arg(long)]
    pub trades_dir: Option<PathBuf>,
    /// Labels CSV.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    Randomized,
}

impl From<MethodArg> for MethodName {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exact => MethodName::Exact,
            MethodArg::Randomized => MethodName::Randomized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Iforest,
    Mcd,
    Benchmark,
}

impl From<DetectorArg> for DetectorName {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Iforest => DetectorName::Iforest,
            DetectorArg::Mcd => DetectorName::Mcd,
            DetectorArg::Benchmark => DetectorName::Benchmark,
        }
    }
}

fn parse_interval(s: &str) -> std::result::Result<IntervalDays, String> {
    let d: u32 = s.parse().map_err(|_| format!("not an integer: {s}"))?;
    IntervalDays::try_from(d)
}

/// Output files are first written into a private directory and
/// only moved into place once all of them succeeded.
pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir(&dir)?;
        Ok(Self {
            out: out.to_path_buf(),
            dir,
            files: Vec::new(),
            committed: false,
        })
    }

    /// Path to write `name` to; registers it for the final move.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let p = self.path(name);
        std::fs::write(p, contents)?;
        Ok(())
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let dest = self.out.join(f);
            std::fs::rename(self.dir.join(f), &dest)?;
            written.push(dest);
        }
        self.committed = true;
        std::fs::remove_dir_all(&self.dir)?;
        Ok(written)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value)?;
    s.push(b'\n');
    Ok(s)
}

fn report_stem(r: &EvaluationReport) -> String {
    if r.detector == "benchmark" {
        format!("benchmark_{}d", r.interval_days)
    } else {
        format!("{}_{}_{}d", r.detector, r.feature_method, r.interval_days)
    }
}

fn sweep_csv(r: &EvaluationReport) -> String {
    let mut s = String::from("param,recall,precision,f1\n");
    for p in &r.sweep {
        let _ = writeln!(s, "{},{},{},{}", p.param, p.recall, p.precision, p.f1);
    }
    s
}

fn hours_csv(r: &EvaluationReport) -> String {
    let mut s = String::from("symbol,hour_start_ms,flagged,label\n");
    for h in &r.hours {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            h.symbol,
            h.hour * crate::pipeline::HOUR_MS,
            u8::from(h.flagged),
            u8::from(h.label)
        );
    }
    s
}

/// Writes `<stem>.json`, `<stem>_pr.csv` and `<stem>_hours.csv` per report.
pub fn stage_reports(staging: &mut Staging, reports: &[EvaluationReport]) -> Result<()> {
    for r in reports {
        let stem = report_stem(r);
        staging.write(&format!("{stem}.json"), &to_json(r)?)?;
        staging.write(&format!("{stem}_pr.csv"), sweep_csv(r).as_bytes())?;
        staging.write(&format!("{stem}_hours.csv"), hours_csv(r).as_bytes())?;
    }
    Ok(())
}

fn stage_synthetic(staging: &mut Staging, reports: &[SyntheticReport]) -> Result<()> {
    for r in reports {
        let stem = match r.method {
            MethodName::Exact => "synthetic_exact",
            MethodName::Randomized => "synthetic_randomized",
        };
        staging.write(&format!("{stem}.json"), &to_json(r)?)?;
        write_curve_csv(&staging.path(&format!("{stem}_roc.csv")), "fpr", "tpr", &r.roc)?;
        write_curve_csv(&staging.path(&format!("{stem}_pr.csv")), "recall", "precision", &r.pr)?;
        let mut q = String::from("quantile,accuracy\n");
        for (i, a) in r.quantile_accuracies.iter().enumerate() {
            let _ = writeln!(q, "{},{a}", i + 1);
        }
        staging.write(&format!("{stem}_quantiles.csv"), q.as_bytes())?;
    }
    Ok(())
}

fn build_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.preset.is_some() {
        cfg.preset = common.preset;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    cfg.resolve();
    Ok(cfg)
}

fn apply_data(cfg: &mut CryptoStudyConfig, data: &DataArgs) {
    if let Some(t) = &data.trades_dir {
        cfg.trades_dir = t.clone();
    }
    if let Some(l) = &data.labels {
        cfg.labels = l.clone();
    }
}

fn init_threads(n: Option<usize>) {
    if let Some(n) = n {
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn feature_method(cfg: &CryptoStudyConfig, method: MethodName, detector: DetectorName) -> Result<FeatureMethod> {
    Ok(match method {
        MethodName::Exact => FeatureMethod::Exact {
            degree: if detector == DetectorName::Mcd {
                cfg.exact_degree_mcd
            } else {
                cfg.exact_degree_iforest
            },
            include_constant: false,
        },
        MethodName::Randomized => FeatureMethod::Randomized(sample_reservoir(&cfg.reservoir)?),
    })
}

fn coin_intervals(cfg: &CryptoStudyConfig, interval: IntervalDays) -> Result<Vec<(crate::pipeline::CoinInterval, Vec<crate::pipeline::TradeRecord>)>> {
    let labels = load_labels(&cfg.labels)?;
    let mut symbols: Vec<&str> = labels.iter().map(|l| l.symbol.as_str()).collect();
    symbols.sort_unstable();
    symbols.dedup();
    symbols
        .into_iter()
        .map(|s| {
            let trades = load_coin_trades(&cfg.trades_dir, s)?;
            Ok((prepare_interval(s, &trades, &labels, interval)?, trades))
        })
        .collect()
}

fn features_csv(m: &FeatureMatrix) -> String {
    let mut s = String::from("window_end");
    for j in 0..m.n_features() {
        let _ = write!(s, ",f{j}");
    }
    s.push('\n');
    for (t, row) in m.window_end_timestamps.iter().zip(&m.rows) {
        let _ = write!(s, "{t}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn read_features(path: &Path, symbol: &str, method: &'static str) -> Result<FeatureMatrix> {
    let parse_err = |line: usize, msg: String| {
        CliError::Pipeline(PipelineError::Parse {
            path: path.display().to_string(),
            line: line as u64,
            msg,
        })
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let width = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?.split(',').count();
    let mut m = FeatureMatrix {
        symbol: symbol.to_string(),
        method,
        rows: Vec::new(),
        window_end_timestamps: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let t = fields
            .next()
            .and_then(|f| f.parse::<i64>().ok())
            .ok_or_else(|| parse_err(i + 2, "bad window_end".into()))?;
        let row = fields
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(i + 2, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() + 1 != width {
            return Err(parse_err(i + 2, format!("expected {} columns", width)));
        }
        m.window_end_timestamps.push(t);
        m.rows.push(row);
    }
    Ok(m)
}

/// Runs one parsed command and returns the files it wrote.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Simulate { common, paths } => {
            let mut cfg = build_config(&common)?;
            if let Some(n) = paths {
                cfg.synthetic.data.n_paths = n;
            }
            cfg.validate(Study::Synthetic)?;
            init_threads(cfg.threads);
            let data = make_dataset(&cfg.synthetic.data, cfg.synthetic.train_fraction)?;
            let x_only = |label: u8| -> Result<Vec<PathSeries>> {
                data.train
                    .iter()
                    .chain(&data.test)
                    .filter(|p| p.label == label)
                    .map(|p| Ok(PathSeries::from_columns(&[p.series.column(1)])?))
                    .collect()
            };
            let (real, fake) = (streak_histogram(&x_only(1)?), streak_histogram(&x_only(0)?));
            let mut staging = Staging::new(&cfg.out_dir)?;
            write_dataset_csv(&staging.path("train.csv"), &data.train)?;
            write_dataset_csv(&staging.path("test.csv"), &data.test)?;
            write_histogram_csv(&staging.path("streaks.csv"), &real, &fake)?;
            staging.commit()
        }
        Command::RunSynthetic { common, paths, method } => {
            let mut cfg = build_config(&common)?;
            if let Some(n) = paths {
                cfg.synthetic.data.n_paths = n;
            }
            if let Some(m) = method {
                cfg.synthetic.methods = vec![m.into()];
            }
            cfg.validate(Study::Synthetic)?;
            init_threads(cfg.threads);
            let reports = run_synthetic_study(&cfg.synthetic)?;
            let mut staging = Staging::new(&cfg.out_dir)?;
            stage_synthetic(&mut staging, &reports)?;
            staging.commit()
        }
        Command::RunCrypto {
            common,
            data,
            method,
            detector,
            interval,
        } => {
            let mut cfg = build_config(&common)?;
            apply_data(&mut cfg.crypto, &data);
            if let Some(m) = method {
                cfg.crypto.methods = vec![m.into()];
            }
            if let Some(d) = detector {
                cfg.crypto.detectors = vec![d.into()];
            }
            if let Some(i) = interval {
                cfg.crypto.intervals = vec![i];
            }
            cfg.validate(Study::Crypto)?;
            init_threads(cfg.threads);
            let reports = run_crypto_study(&cfg.crypto)?;
            let mut staging = Staging::new(&cfg.out_dir)?;
            stage_reports(&mut staging, &reports)?;
            staging.commit()
        }
        Command::Featurize {
            common,
            data,
            method,
            detector,
            interval,
        } => {
            let mut cfg = build_config(&common)?;
            apply_data(&mut cfg.crypto, &data);
            cfg.validate(Study::Crypto)?;
            init_threads(cfg.threads);
            let c = &cfg.crypto;
            let fm = feature_method(c, method.into(), detector.into())?;
            let mut staging = Staging::new(&cfg.out_dir)?;
            for (coin, _) in coin_intervals(c, interval)? {
                let series = build_channels(&coin.trades, false).map_err(|e| e.for_coin(&coin.symbol))?;
                let m = featurize_windows(&coin.symbol, &series, c.window, &fm, c.normalization)
                    .map_err(|e| e.for_coin(&coin.symbol))?;
                staging.write(&format!("{}.csv", coin.symbol), features_csv(&m).as_bytes())?;
            }
            staging.commit()
        }
        Command::Evaluate {
            common,
            data,
            features,
            method,
            detector,
            interval,
        } => {
            let mut cfg = build_config(&common)?;
            apply_data(&mut cfg.crypto, &data);
            cfg.validate(Study::Crypto)?;
            init_threads(cfg.threads);
            let c = &cfg.crypto;
            let labels = load_labels(&c.labels)?;
            let report = match DetectorName::from(detector) {
                DetectorName::Benchmark => {
                    let warmup = c.ma_window as i64;
                    let bars: BTreeMap<_, _> = coin_intervals(c, interval)?
                        .into_iter()
                        .map(|(ci, all)| {
                            let b = hourly_bars(&all, ci.first_hour - warmup, ci.last_hour);
                            (ci.symbol, b)
                        })
                        .collect();
                    pr_sweep_benchmark(&bars, &labels, c.benchmark_steps, c.ma_window, interval)?
                }
                det => {
                    let dir = features.ok_or_else(|| {
                        CliError::Config("--features DIR is required for signature detectors".into())
                    })?;
                    let tag = match MethodName::from(method) {
                        MethodName::Exact => "exact",
                        MethodName::Randomized => "randomized",
                    };
                    let mut symbols: Vec<&str> = labels.iter().map(|l| l.symbol.as_str()).collect();
                    symbols.sort_unstable();
                    symbols.dedup();
                    let matrices = symbols
                        .iter()
                        .map(|s| read_features(&dir.join(format!("{s}.csv")), s, tag))
                        .collect::<Result<Vec<_>>>()?;
                    let kind = match det {
                        DetectorName::Mcd => DetectorKind::Mcd(c.mcd),
                        _ => DetectorKind::IsolationForest(c.iforest),
                    };
                    pr_sweep_detector(&matrices, &labels, &kind, &c.contamination_grid, interval)?
                }
            };
            let mut staging = Staging::new(&cfg.out_dir)?;
            stage_reports(&mut staging, std::slice::from_ref(&report))?;
            staging.commit()
        }
    }
}

/// Parses `args` (program name first) and executes the command.
pub fn run<I, T>(args: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(cli)
}
