//! Numeric tabular datasets: CSV ingestion, quartiles and seeded splits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("target column '{0}' not found in header")]
    TargetNotFound(String),
    #[error("regression target '{0}' is not numeric")]
    TargetNotNumeric(String),
    #[error("task-kind mismatch: {0}")]
    TaskMismatch(String),
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("duplicate feature name '{0}'")]
    DuplicateFeature(String),
    #[error("column '{name}' has {len} values, expected {expected}")]
    Ragged {
        name: String,
        len: usize,
        expected: usize,
    },
    #[error("non-finite value in feature '{feature}' at row {row}")]
    NonFinite { feature: String, row: usize },
    #[error("dataset has no target column")]
    NoTarget,
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("split leaves the {0} part empty")]
    EmptySplit(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
    Unlabeled,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
            TaskKind::Unlabeled => "unlabeled",
        })
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            "unlabeled" => Ok(TaskKind::Unlabeled),
            other => Err(format!(
                "unknown task kind '{other}' (expected classification or regression)"
            )),
        }
    }
}

/// Target column: class labels for classification, reals for regression.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Labels(Vec<String>),
    Values(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Labels(v) => v.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task_kind(&self) -> TaskKind {
        match self {
            Target::Labels(_) => TaskKind::Classification,
            Target::Values(_) => TaskKind::Regression,
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        match self {
            Target::Labels(v) => Some(v),
            Target::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match self {
            Target::Values(v) => Some(v),
            Target::Labels(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Target {
        match self {
            Target::Labels(v) => Target::Labels(rows.iter().map(|&r| v[r].clone()).collect()),
            Target::Values(v) => Target::Values(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Target::Labels(v) => v[row].clone(),
            Target::Values(v) => v[row].to_string(),
        }
    }
}

/// Column-major numeric table with an optional target.
///
/// Immutable once built: every column has the same length `n >= 1`, all
/// values are finite and feature names are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target_name: Option<String>,
    target: Option<Target>,
}

impl Dataset {
    /// Builds an unlabeled dataset from named columns.
    pub fn new(feature_names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if feature_names.len() != columns.len() {
            return Err(DatasetError::InvalidArgument(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        if columns.is_empty() {
            return Err(DatasetError::Empty("no feature columns".into()));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(DatasetError::Empty("no rows".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (name, col) in feature_names.iter().zip(&columns) {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateFeature(name.clone()));
            }
            if col.len() != n {
                return Err(DatasetError::Ragged {
                    name: name.clone(),
                    len: col.len(),
                    expected: n,
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    feature: name.clone(),
                    row,
                });
            }
        }
        Ok(Dataset {
            feature_names,
            columns,
            target_name: None,
            target: None,
        })
    }

    /// Attaches a target column, replacing any existing one.
    pub fn with_target(mut self, name: impl Into<String>, target: Target) -> Result<Self> {
        let name = name.into();
        if target.len() != self.n_rows() {
            return Err(DatasetError::Ragged {
                name,
                len: target.len(),
                expected: self.n_rows(),
            });
        }
        if let Target::Values(v) = &target {
            if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                return Err(DatasetError::NonFinite { feature: name, row });
            }
        }
        if self.feature_names.contains(&name) {
            return Err(DatasetError::DuplicateFeature(name));
        }
        self.target_name = Some(name);
        self.target = Some(target);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.feature_index(name).map(|i| self.column(i))
    }

    pub fn target(&self) -> Option<&Target> {
        self.target.as_ref()
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target_name.as_deref()
    }

    pub fn task_kind(&self) -> TaskKind {
        self.target
            .as_ref()
            .map_or(TaskKind::Unlabeled, Target::task_kind)
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    /// Row-major copy of the feature matrix.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }

    /// New dataset holding only `rows` (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(DatasetError::Empty("row selection is empty".into()));
        }
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        Ok(Dataset {
            feature_names: self.feature_names.clone(),
            columns,
            target_name: self.target_name.clone(),
            target: self.target.as_ref().map(|t| t.select(rows)),
        })
    }

    /// Same rows and target with the feature columns replaced.
    pub fn replace_columns(
        &self,
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Dataset> {
        let mut out = Dataset::new(feature_names, columns)?;
        if out.n_rows() != self.n_rows() {
            return Err(DatasetError::InvalidArgument(format!(
                "replacement has {} rows, expected {}",
                out.n_rows(),
                self.n_rows()
            )));
        }
        if let (Some(name), Some(target)) = (&self.target_name, &self.target) {
            out = out.with_target(name.clone(), target.clone())?;
        }
        Ok(out)
    }

    /// Writes the table as CSV: feature columns in order, then the target.
    ///
    /// Reals use the shortest representation that parses back to the same
    /// bits, so a load/write/load cycle is lossless.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if let Some(name) = &self.target_name {
            header.push(name);
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for row in 0..self.n_rows() {
            record.clear();
            record.extend(self.columns.iter().map(|c| c[row].to_string()));
            if let Some(t) = &self.target {
                record.push(t.cell(row));
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| DatasetError::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// What ingestion threw away.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_columns: Vec<String>,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Missing,
    Number(f64),
    Text,
}

const MISSING_TOKENS: &[&str] = &["", "na", "n/a", "nan", "null", "none", "?"];

fn classify_cell(raw: &str) -> Cell {
    let s = raw.trim();
    if MISSING_TOKENS.iter().any(|t| s.eq_ignore_ascii_case(t)) {
        return Cell::Missing;
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Number(v),
        // "inf" and friends parse but cannot be stored.
        Ok(_) => Cell::Missing,
        Err(_) => Cell::Text,
    }
}

/// Loads a CSV file with a header row.
///
/// Columns holding any non-numeric text are dropped; rows with a missing
/// value in a retained column (or in the target) are dropped. Both are
/// counted in the returned [`LoadReport`] and logged as warnings.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_name: Option<&str>,
    task_kind: TaskKind,
) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, target_name, task_kind)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    target_name: Option<&str>,
    task_kind: TaskKind,
) -> Result<(Dataset, LoadReport)> {
    if target_name.is_some() && task_kind == TaskKind::Unlabeled {
        return Err(DatasetError::InvalidArgument(
            "a target column needs a classification or regression task".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let target_idx = match target_name {
        Some(t) => Some(
            header
                .iter()
                .position(|h| h == t.trim())
                .ok_or_else(|| DatasetError::TargetNotFound(t.to_string()))?,
        ),
        None => None,
    };

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        raw_rows.push(record.iter().map(str::to_string).collect());
    }
    if raw_rows.is_empty() {
        return Err(DatasetError::Empty("no data rows".into()));
    }

    let n_cols = header.len();
    let mut is_numeric = vec![true; n_cols];
    let mut has_number = vec![false; n_cols];
    for row in &raw_rows {
        for (j, raw) in row.iter().enumerate() {
            match classify_cell(raw) {
                Cell::Text => is_numeric[j] = false,
                Cell::Number(_) => has_number[j] = true,
                Cell::Missing => {}
            }
        }
    }

    let mut report = LoadReport::default();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..n_cols {
        if Some(j) == target_idx {
            continue;
        }
        if is_numeric[j] && has_number[j] {
            kept.push(j);
        } else {
            report.dropped_columns.push(header[j].clone());
        }
    }
    if let Some(t) = target_idx {
        if task_kind == TaskKind::Regression && !(is_numeric[t] && has_number[t]) {
            return Err(DatasetError::TargetNotNumeric(header[t].clone()));
        }
    }
    if kept.is_empty() {
        return Err(DatasetError::Empty("no numeric feature columns".into()));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(raw_rows.len()); kept.len()];
    let mut labels = Vec::new();
    let mut values = Vec::new();
    'rows: for row in &raw_rows {
        let mut parsed = Vec::with_capacity(kept.len());
        for &j in &kept {
            match classify_cell(&row[j]) {
                Cell::Number(v) => parsed.push(v),
                _ => {
                    report.dropped_rows += 1;
                    continue 'rows;
                }
            }
        }
        if let Some(t) = target_idx {
            let raw = row[t].trim();
            match task_kind {
                TaskKind::Regression => match classify_cell(raw) {
                    Cell::Number(v) => values.push(v),
                    _ => {
                        report.dropped_rows += 1;
                        continue 'rows;
                    }
                },
                _ => {
                    if classify_cell(raw) == Cell::Missing {
                        report.dropped_rows += 1;
                        continue 'rows;
                    }
                    labels.push(raw.to_string());
                }
            }
        }
        for (col, v) in columns.iter_mut().zip(parsed) {
            col.push(v);
        }
    }

    if columns[0].is_empty() {
        return Err(DatasetError::Empty(
            "every row was dropped during cleaning".into(),
        ));
    }
    if !report.dropped_columns.is_empty() {
        warn!(
            "dropped {} non-numeric column(s): {}",
            report.dropped_columns.len(),
            report.dropped_columns.join(", ")
        );
    }
    if report.dropped_rows > 0 {
        warn!("dropped {} row(s) with missing values", report.dropped_rows);
    }

    let names = kept.iter().map(|&j| header[j].clone()).collect();
    let mut ds = Dataset::new(names, columns)?;
    if let Some(t) = target_idx {
        let target = match task_kind {
            TaskKind::Regression => Target::Values(values),
            _ => Target::Labels(labels),
        };
        ds = ds.with_target(header[t].clone(), target)?;
    }
    Ok((ds, report))
}

/// Rejects a classification request on a target that looks continuous.
///
/// A numeric target with non-integral values, or with more distinct values
/// than half the rows, is treated as a regression target.
pub fn check_classification_target(ds: &Dataset) -> Result<()> {
    let Some(Target::Labels(labels)) = ds.target() else {
        return Ok(());
    };
    let mut numeric = Vec::with_capacity(labels.len());
    for l in labels {
        match l.parse::<f64>() {
            Ok(v) if v.is_finite() => numeric.push(v),
            _ => return Ok(()),
        }
    }
    if numeric.iter().any(|v| v.fract() != 0.0) {
        return Err(DatasetError::TaskMismatch(
            "classification requested but the target has non-integral numeric values".into(),
        ));
    }
    let distinct: std::collections::BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    if labels.len() >= 20 && distinct.len() * 2 > labels.len() {
        return Err(DatasetError::TaskMismatch(format!(
            "classification requested but the target has {} distinct values over {} rows",
            distinct.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// First and third quartile of a column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

/// Type-7 quantile of an already sorted slice.
fn interpolate_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Quartiles by linear interpolation at ranks `0.25(n-1)` and `0.75(n-1)`.
pub fn quartiles(values: &[f64]) -> Result<QuartileSummary> {
    if values.is_empty() {
        return Err(DatasetError::Empty("quartiles of an empty list".into()));
    }
    if let Some(row) = values.iter().position(|v| !v.is_finite()) {
        return Err(DatasetError::NonFinite {
            feature: "<quartiles>".into(),
            row,
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let q1 = interpolate_sorted(&sorted, 0.25);
    let q3 = interpolate_sorted(&sorted, 0.75);
    Ok(QuartileSummary {
        q1,
        q3,
        iqr: q3 - q1,
    })
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
    pub fraction: f64,
}

/// Seeded train/test split; `fraction` is the share of rows sent to test.
///
/// Classification targets are stratified: classes with at least two rows
/// get a test quota by largest remainder so the total matches
/// `round(eligible * fraction)`, and no class gives up all its rows.
/// Singleton classes stay in train. Both parts keep the original row order.
pub fn train_test_split(d: &Dataset, fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(fraction));
    }
    let target = d.target().ok_or(DatasetError::NoTarget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = d.n_rows();

    let mut test_rows = match target {
        Target::Labels(labels) => {
            let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                strata.entry(l.as_str()).or_default().push(i);
            }
            let mut eligible = Vec::new();
            for (label, rows) in strata.iter_mut() {
                if rows.len() < 2 {
                    warn!("class '{label}' has a single row; keeping it in train");
                    continue;
                }
                rows.shuffle(&mut rng);
                eligible.push(rows);
            }
            let total: usize = eligible.iter().map(|r| r.len()).sum();
            let want = (total as f64 * fraction).round() as usize;
            let quotas = largest_remainder(
                &eligible.iter().map(|r| r.len()).collect::<Vec<_>>(),
                fraction,
                want,
            );
            eligible
                .iter()
                .zip(quotas)
                .flat_map(|(rows, q)| rows[..q].iter().copied())
                .collect::<Vec<_>>()
        }
        Target::Values(_) => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            let want = (n as f64 * fraction).round() as usize;
            rows.truncate(want.min(n));
            rows
        }
    };

    test_rows.sort_unstable();
    if test_rows.is_empty() {
        return Err(DatasetError::EmptySplit("test"));
    }
    let mut in_test = vec![false; n];
    for &r in &test_rows {
        in_test[r] = true;
    }
    let train_rows: Vec<usize> = (0..n).filter(|&r| !in_test[r]).collect();
    if train_rows.is_empty() {
        return Err(DatasetError::EmptySplit("train"));
    }
    Ok(SplitDataset {
        train: d.select_rows(&train_rows)?,
        test: d.select_rows(&test_rows)?,
        train_rows,
        test_rows,
        seed,
        fraction,
    })
}

/// Per-stratum quotas summing to `want`, each capped at `size - 1`.
fn largest_remainder(sizes: &[usize], fraction: f64, want: usize) -> Vec<usize> {
    let caps: Vec<usize> = sizes.iter().map(|&s| s.saturating_sub(1)).collect();
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quotas: Vec<usize> = exact
        .iter()
        .zip(&caps)
        .map(|(&e, &cap)| (e.floor() as usize).min(cap))
        .collect();
    let mut assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // Stable sort keeps class order for equal remainders.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra)
    });
    while assigned < want {
        let mut progressed = false;
        for &i in &order {
            if assigned >= want {
                break;
            }
            if quotas[i] < caps[i] {
                quotas[i] += 1;
                assigned += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quotas
}
