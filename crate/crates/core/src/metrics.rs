//! Classification and regression metrics.

use std::collections::BTreeSet;
use std::fmt;

use log::warn;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} true values vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("no samples to evaluate")]
    Empty,
    #[error("invalid confusion matrix: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// K×K counts, rows = actual class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

/// One-vs-rest tallies for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(MetricsError::Invalid(format!(
                "expected a {k}x{k} count matrix"
            )));
        }
        let cm = ConfusionMatrix { classes, counts };
        if cm.total() == 0 {
            return Err(MetricsError::Empty);
        }
        Ok(cm)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, actual: &str, predicted: &str) -> u64 {
        let idx = |c: &str| self.classes.iter().position(|x| x == c);
        match (idx(actual), idx(predicted)) {
            (Some(a), Some(p)) => self.counts[a][p],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn class_counts(&self, class: usize) -> ClassCounts {
        let total = self.total();
        let tp = self.counts[class][class];
        let actual: u64 = self.counts[class].iter().sum();
        let predicted: u64 = self.counts.iter().map(|r| r[class]).sum();
        ClassCounts {
            tp,
            fp: predicted - tp,
            fn_: actual - tp,
            tn: total + tp - actual - predicted,
        }
    }
}

/// Tallies predictions; classes are the sorted union of both label lists.
pub fn confusion_matrix<L: AsRef<str>>(y_true: &[L], y_pred: &[L]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let classes: Vec<String> = y_true
        .iter()
        .chain(y_pred)
        .map(|l| l.as_ref())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let index = |l: &str| {
        classes
            .binary_search_by(|c| c.as_str().cmp(l))
            .expect("label in union")
    };
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (t, p) in y_true.iter().zip(y_pred) {
        counts[index(t.as_ref())][index(p.as_ref())] += 1;
    }
    ConfusionMatrix::from_counts(classes, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
}

impl ClassificationReport {
    pub const NAMES: [&'static str; 5] = ["accuracy", "precision", "recall", "f1", "mcc"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.mcc,
        ]
    }
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy={:.4} precision={:.4} recall={:.4} f1={:.4} mcc={:.4}",
            self.accuracy, self.precision, self.recall, self.f1, self.mcc
        )
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Matthews correlation from binary counts; 0 when the denominator is 0.
pub fn mcc_binary(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den
    }
}

/// Multiclass Matthews correlation (Gorodkin's R_K); 0 on a zero denominator.
pub fn mcc_multiclass(cm: &ConfusionMatrix) -> f64 {
    let k = cm.classes.len();
    let s = cm.total() as f64;
    let c = cm.trace() as f64;
    let actual: Vec<f64> = cm
        .counts
        .iter()
        .map(|r| r.iter().sum::<u64>() as f64)
        .collect();
    let predicted: Vec<f64> = (0..k)
        .map(|j| cm.counts.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let pt: f64 = actual.iter().zip(&predicted).map(|(t, p)| t * p).sum();
    let pp: f64 = predicted.iter().map(|p| p * p).sum();
    let tt: f64 = actual.iter().map(|t| t * t).sum();
    let den = ((s * s - pp) * (s * s - tt)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (c * s - pt) / den
    }
}

/// Accuracy plus macro-averaged precision/recall/F1 and MCC.
///
/// Two-class matrices use the binary MCC with the second class as positive
/// (the value is symmetric in that choice); larger ones use R_K.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let k = cm.classes.len();
    let total = cm.total();
    if k == 0 || total == 0 {
        return Err(MetricsError::Empty);
    }
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for class in 0..k {
        let c = cm.class_counts(class);
        let p = ratio(c.tp, c.tp + c.fp);
        let r = ratio(c.tp, c.tp + c.fn_);
        precision += p;
        recall += r;
        f1 += if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
    }
    let kf = k as f64;
    let mcc = if k == 2 {
        let c = cm.class_counts(1);
        mcc_binary(c.tp, c.tn, c.fp, c.fn_)
    } else {
        mcc_multiclass(cm)
    };
    Ok(ClassificationReport {
        accuracy: ratio(cm.trace(), total),
        precision: precision / kf,
        recall: recall / kf,
        f1: f1 / kf,
        mcc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionReport {
    pub mae: f64,
    pub mse: f64,
    pub r2: f64,
}

impl RegressionReport {
    pub const NAMES: [&'static str; 3] = ["mae", "mse", "r2"];

    pub fn values(&self) -> [f64; 3] {
        [self.mae, self.mse, self.r2]
    }
}

impl fmt::Display for RegressionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mae={:.4} mse={:.4} r2={:.4}",
            self.mae, self.mse, self.r2
        )
    }
}

/// MAE, MSE and R² (with `R² = 0` when `y_true` has no variance).
pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionReport> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = y_true.len() as f64;
    let mae = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).abs())
        .sum::<f64>()
        / n;
    let sse: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    let mean = y_true.iter().sum::<f64>() / n;
    let sst: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
    let r2 = if sst == 0.0 {
        warn!("target has zero variance; reporting R² = 0");
        0.0
    } else {
        1.0 - sse / sst
    };
    Ok(RegressionReport {
        mae,
        mse: sse / n,
        r2,
    })
}
