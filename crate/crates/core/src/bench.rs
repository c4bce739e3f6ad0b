//! Scaler comparison protocol.
//!
//! One seeded split; every scaler is fitted on the training part only and
//! applied to both parts; KNN (classification) or OLS (regression) is
//! trained on the scaled training rows and scored on the scaled test rows.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{
    check_classification_target, load_csv, train_test_split, Dataset, DatasetError, SplitDataset,
    TaskKind,
};
use crate::metrics::{
    classification_metrics, confusion_matrix, regression_metrics, ClassificationReport,
    RegressionReport,
};
use crate::models::{ols_fit, KnnModel};
use crate::scalers::{FittedScaler, ScalerMethod};
use crate::tree::FactorMode;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task-kind mismatch: {0}")]
    TaskMismatch(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl BenchError {
    /// Whether the failure is the caller's fault rather than the data's.
    pub fn is_usage(&self) -> bool {
        matches!(self, BenchError::Config(_) | BenchError::TaskMismatch(_))
    }
}

/// A scaler method plus the factor mode it runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScalerSpec {
    pub method: ScalerMethod,
    pub mode: FactorMode,
}

impl ScalerSpec {
    pub fn label(&self) -> String {
        match self.method {
            ScalerMethod::Dtization => format!("dtization[{}]", self.mode),
            m => m.to_string(),
        }
    }

    /// Expands methods × modes; only DTization is repeated per mode.
    pub fn expand(methods: &[ScalerMethod], modes: &[FactorMode]) -> Vec<ScalerSpec> {
        let mut out = Vec::new();
        for &method in methods {
            if method == ScalerMethod::Dtization {
                out.extend(modes.iter().map(|&mode| ScalerSpec { method, mode }));
            } else {
                out.push(ScalerSpec {
                    method,
                    mode: modes.first().copied().unwrap_or_default(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Rows,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "rows" => Ok(OutputFormat::Rows),
            other => Err(format!("unknown format '{other}' (expected text or rows)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub data: PathBuf,
    pub target: String,
    pub task: TaskKind,
    pub scalers: Vec<ScalerSpec>,
    pub k: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl BenchConfig {
    pub fn new(data: impl Into<PathBuf>, target: impl Into<String>, task: TaskKind) -> Self {
        BenchConfig {
            data: data.into(),
            target: target.into(),
            task,
            scalers: ScalerSpec::expand(&ScalerMethod::ALL, &[FactorMode::AsPublished]),
            k: KnnModel::DEFAULT_K,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: DEFAULT_SEED,
            output: None,
            format: OutputFormat::Text,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(BenchError::Config(format!(
                "test fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.k == 0 {
            return Err(BenchError::Config("k must be at least 1".into()));
        }
        if self.scalers.is_empty() {
            return Err(BenchError::Config("scaler list is empty".into()));
        }
        if self.task == TaskKind::Unlabeled {
            return Err(BenchError::Config(
                "bench needs a classification or regression task".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    pub scaler: String,
    pub model: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchFailure {
    pub scaler: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub dataset: String,
    pub task: TaskKind,
    pub model: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub scalers: Vec<String>,
    pub rows: Vec<BenchRow>,
    pub failures: Vec<BenchFailure>,
    pub tool_version: String,
    pub generated_at: u64,
}

impl BenchReport {
    pub fn metric_names(&self) -> &'static [&'static str] {
        match self.task {
            TaskKind::Regression => &RegressionReport::NAMES,
            _ => &ClassificationReport::NAMES,
        }
    }

    /// Value of `metric` for the scaler labelled `scaler`.
    pub fn value(&self, scaler: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scaler == scaler && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    fn metadata(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool: dtization {}", self.tool_version);
        let _ = writeln!(
            out,
            "# dataset: {} ({}, train={}, test={})",
            self.dataset, self.task, self.n_train, self.n_test
        );
        let _ = writeln!(
            out,
            "# model: {}  seed: {}  test_fraction: {}  k: {}",
            self.model, self.seed, self.test_fraction, self.k
        );
        out
    }

    /// Report text without the timestamp line.
    pub fn body(&self, format: OutputFormat) -> String {
        let mut out = self.metadata();
        match format {
            OutputFormat::Text => self.write_table(&mut out),
            OutputFormat::Rows => self.write_rows(&mut out),
        }
        out
    }

    /// Full report: a timestamp line followed by [`BenchReport::body`].
    pub fn render(&self, format: OutputFormat) -> String {
        format!(
            "# generated_at_unix: {}\n{}",
            self.generated_at,
            self.body(format)
        )
    }

    fn write_table(&self, out: &mut String) {
        let headers: Vec<&str> = match self.task {
            TaskKind::Regression => vec!["MAE", "MSE", "R-squared"],
            _ => vec!["Accuracy", "Precision", "Recall", "F1-score", "MCC"],
        };
        let scaler_w = self
            .scalers
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("Approach".len());
        let data_w = self.dataset.len().max("Dataset".len());
        let _ = write!(out, "\n{:<data_w$}  {:<scaler_w$}", "Dataset", "Approach");
        for h in &headers {
            let _ = write!(out, "  {h:>10}");
        }
        out.push('\n');
        for scaler in &self.scalers {
            let _ = write!(out, "{:<data_w$}  {:<scaler_w$}", self.dataset, scaler);
            if let Some(f) = self.failures.iter().find(|f| &f.scaler == scaler) {
                let _ = writeln!(out, "  FAILED: {}", f.message);
                continue;
            }
            for metric in self.metric_names() {
                match self.value(scaler, metric) {
                    Some(v) => {
                        let _ = write!(out, "  {v:>10.4}");
                    }
                    None => {
                        let _ = write!(out, "  {:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
    }

    fn write_rows(&self, out: &mut String) {
        out.push_str("dataset,scaler,model,metric,value\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.dataset, r.scaler, r.model, r.metric, r.value
            );
        }
        for f in &self.failures {
            let _ = writeln!(
                out,
                "{},{},{},FAILED,\"{}\"",
                self.dataset,
                f.scaler,
                self.model,
                f.message.replace('"', "'")
            );
        }
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(OutputFormat::Text))
    }
}

fn dataset_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads the configured CSV and runs the protocol on it.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let (ds, _) = match load_csv(&config.data, Some(&config.target), config.task) {
        Err(DatasetError::TargetNotNumeric(t)) => {
            return Err(BenchError::TaskMismatch(format!(
                "regression requested but target '{t}' is not numeric"
            )))
        }
        other => other?,
    };
    run_bench_on(&ds, &dataset_label(&config.data), config)
}

/// Runs the protocol on an already-loaded dataset.
///
/// A scaler that fails is recorded in [`BenchReport::failures`]; the other
/// cells still run.
pub fn run_bench_on(
    ds: &Dataset,
    name: &str,
    config: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    config.validate()?;
    if ds.task_kind() != config.task {
        return Err(BenchError::TaskMismatch(format!(
            "dataset target is {} but {} was requested",
            ds.task_kind(),
            config.task
        )));
    }
    if config.task == TaskKind::Classification {
        check_classification_target(ds).map_err(|e| match e {
            DatasetError::TaskMismatch(m) => BenchError::TaskMismatch(m),
            other => BenchError::Dataset(other),
        })?;
    }
    let split = train_test_split(ds, config.test_fraction, config.seed)?;
    let model = match config.task {
        TaskKind::Regression => "ols".to_string(),
        _ => format!("knn(k={})", config.k),
    };

    let cells: Vec<Result<Vec<(String, f64)>, String>> = config
        .scalers
        .par_iter()
        .map(|spec| evaluate(&split, *spec, config).map_err(|e| e.to_string()))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (spec, cell) in config.scalers.iter().zip(cells) {
        let scaler = spec.label();
        match cell {
            Ok(metrics) if metrics.iter().all(|(_, v)| v.is_finite()) => {
                rows.extend(metrics.into_iter().map(|(metric, value)| BenchRow {
                    dataset: name.to_string(),
                    scaler: scaler.clone(),
                    model: model.clone(),
                    metric,
                    value,
                }));
            }
            Ok(_) => failures.push(BenchFailure {
                scaler,
                message: "non-finite metric".into(),
            }),
            Err(message) => failures.push(BenchFailure { scaler, message }),
        }
    }

    Ok(BenchReport {
        dataset: name.to_string(),
        task: config.task,
        model,
        seed: config.seed,
        test_fraction: config.test_fraction,
        k: config.k,
        n_train: split.train.n_rows(),
        n_test: split.test.n_rows(),
        scalers: config.scalers.iter().map(ScalerSpec::label).collect(),
        rows,
        failures,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    })
}

/// One (scaler, model) cell: fit on train, score on test.
fn evaluate(
    split: &SplitDataset,
    spec: ScalerSpec,
    config: &BenchConfig,
) -> Result<Vec<(String, f64)>, Box<dyn std::error::Error + Send + Sync>> {
    let scaler = FittedScaler::fit(&split.train, spec.method, spec.mode)?;
    let train = scaler.transform(&split.train)?;
    let test = scaler.transform(&split.test)?;
    let named = |names: &[&str], values: &[f64]| {
        names
            .iter()
            .zip(values)
            .map(|(n, v)| (n.to_string(), *v))
            .collect::<Vec<_>>()
    };
    match config.task {
        TaskKind::Regression => {
            let y_train = train
                .target()
                .and_then(|t| t.values())
                .ok_or("missing regression target")?;
            let y_test = test
                .target()
                .and_then(|t| t.values())
                .ok_or("missing regression target")?;
            let model = ols_fit(&train.to_rows(), y_train)?;
            let pred = model.predict(&test.to_rows())?;
            let report = regression_metrics(y_test, &pred)?;
            Ok(named(&RegressionReport::NAMES, &report.values()))
        }
        _ => {
            let y_train = train
                .target()
                .and_then(|t| t.labels())
                .ok_or("missing class labels")?;
            let y_test = test
                .target()
                .and_then(|t| t.labels())
                .ok_or("missing class labels")?;
            let model = KnnModel::new(train.to_rows(), y_train.to_vec(), config.k)?;
            let pred = model.predict(&test.to_rows())?;
            let report = classification_metrics(&confusion_matrix(y_test, &pred)?)?;
            Ok(named(&ClassificationReport::NAMES, &report.values()))
        }
    }
}
