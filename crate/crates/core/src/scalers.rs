//! Feature scalers: DTization plus the min-max, standard, log and robust
//! baselines, with a checksummed on-disk format.
//!
//! The robust scaler here is `(X - Q1) / (Q3 - Q1)`: it subtracts the first
//! quartile, not the median. DTization multiplies that output by the
//! per-feature factor from [`crate::tree`]. Any column whose fitted spread
//! is zero maps to 0 under every method.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{quartiles, Dataset, DatasetError, QuartileSummary};
use crate::tree::{calculate_sf, exponent, FactorMode, ScalingFactorTable, TreeError};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ScalerError {
    #[error("dtization is supervised and needs a target column")]
    MissingTarget,
    #[error("dataset is missing fitted feature(s): {}", .0.join(", "))]
    MissingFeatures(Vec<String>),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unparseable scaler file: {0}")]
    Parse(String),
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: String },
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("unknown method '{0}' (valid: dtization, minmax, standard, log, robust)")]
    UnknownMethod(String),
    #[error("invalid scaler: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ScalerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerMethod {
    Dtization,
    MinMax,
    Standard,
    Log,
    Robust,
}

impl ScalerMethod {
    pub const ALL: [ScalerMethod; 5] = [
        ScalerMethod::MinMax,
        ScalerMethod::Standard,
        ScalerMethod::Log,
        ScalerMethod::Robust,
        ScalerMethod::Dtization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScalerMethod::Dtization => "dtization",
            ScalerMethod::MinMax => "minmax",
            ScalerMethod::Standard => "standard",
            ScalerMethod::Log => "log",
            ScalerMethod::Robust => "robust",
        }
    }

    pub fn is_supervised(self) -> bool {
        self == ScalerMethod::Dtization
    }
}

impl fmt::Display for ScalerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScalerMethod {
    type Err = ScalerError;

    fn from_str(s: &str) -> Result<Self> {
        ScalerMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ScalerError::UnknownMethod(s.to_string()))
    }
}

/// Fitted parameters of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureParams {
    MinMax {
        min: f64,
        max: f64,
    },
    Standard {
        mean: f64,
        std: f64,
    },
    Log {
        shift: f64,
        constant: bool,
    },
    Robust {
        quartiles: QuartileSummary,
    },
    Dtization {
        quartiles: QuartileSummary,
        factor: f64,
    },
}

fn robust(x: f64, q: &QuartileSummary) -> f64 {
    if q.iqr == 0.0 {
        0.0
    } else {
        (x - q.q1) / q.iqr
    }
}

impl FeatureParams {
    fn method(&self) -> ScalerMethod {
        match self {
            FeatureParams::MinMax { .. } => ScalerMethod::MinMax,
            FeatureParams::Standard { .. } => ScalerMethod::Standard,
            FeatureParams::Log { .. } => ScalerMethod::Log,
            FeatureParams::Robust { .. } => ScalerMethod::Robust,
            FeatureParams::Dtization { .. } => ScalerMethod::Dtization,
        }
    }

    fn fit(method: ScalerMethod, column: &[f64], factor: f64) -> Result<Self> {
        Ok(match method {
            ScalerMethod::MinMax => {
                let (min, max) = min_max(column);
                FeatureParams::MinMax { min, max }
            }
            ScalerMethod::Standard => {
                let n = column.len() as f64;
                let mean = column.iter().sum::<f64>() / n;
                let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                FeatureParams::Standard {
                    mean,
                    std: var.sqrt(),
                }
            }
            ScalerMethod::Log => {
                let (min, max) = min_max(column);
                FeatureParams::Log {
                    shift: (1.0 - min).max(0.0),
                    constant: min == max,
                }
            }
            ScalerMethod::Robust => FeatureParams::Robust {
                quartiles: quartiles(column)?,
            },
            ScalerMethod::Dtization => FeatureParams::Dtization {
                quartiles: quartiles(column)?,
                factor,
            },
        })
    }

    /// Scales one value.
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            FeatureParams::MinMax { min, max } => {
                let range = max - min;
                if range == 0.0 {
                    0.0
                } else {
                    (x - min) / range
                }
            }
            FeatureParams::Standard { mean, std } => {
                if std == 0.0 {
                    0.0
                } else {
                    (x - mean) / std
                }
            }
            FeatureParams::Log { shift, constant } => {
                if constant {
                    0.0
                } else {
                    // Unseen values can push the argument to zero or below.
                    (x + shift).max(f64::MIN_POSITIVE).ln()
                }
            }
            FeatureParams::Robust { ref quartiles } => robust(x, quartiles),
            FeatureParams::Dtization {
                ref quartiles,
                factor,
            } => factor * robust(x, quartiles),
        }
    }

    fn validate(&self, feature: &str) -> Result<()> {
        let bad = |what: &str| Err(ScalerError::Invalid(format!("feature '{feature}': {what}")));
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match *self {
            FeatureParams::MinMax { min, max } => {
                if !finite(&[min, max]) || min > max {
                    return bad("min/max must be finite with min <= max");
                }
            }
            FeatureParams::Standard { mean, std } => {
                if !finite(&[mean, std]) || std < 0.0 {
                    return bad("mean/std must be finite with std >= 0");
                }
            }
            FeatureParams::Log { shift, .. } => {
                if !shift.is_finite() || shift < 0.0 {
                    return bad("log shift must be finite and >= 0");
                }
            }
            FeatureParams::Robust { quartiles: q }
            | FeatureParams::Dtization { quartiles: q, .. } => {
                if !finite(&[q.q1, q.q3]) || q.q1 > q.q3 || q.iqr != q.q3 - q.q1 {
                    return bad("quartiles must be finite with q1 <= q3 and iqr = q3 - q1");
                }
            }
        }
        Ok(())
    }
}

fn min_max(column: &[f64]) -> (f64, f64) {
    column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// A fitted transform, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedScaler {
    method: ScalerMethod,
    mode: FactorMode,
    feature_names: Vec<String>,
    params: Vec<FeatureParams>,
    factor_table: Option<ScalingFactorTable>,
}

impl FittedScaler {
    /// Fits `method` on every feature column of `d`.
    ///
    /// `mode` only matters for DTization; it is recorded for all methods.
    pub fn fit(d: &Dataset, method: ScalerMethod, mode: FactorMode) -> Result<Self> {
        let factor_table = if method.is_supervised() {
            if d.target().is_none() {
                return Err(ScalerError::MissingTarget);
            }
            let x = exponent(d.n_features())?;
            Some(calculate_sf(d, x, mode)?)
        } else {
            None
        };
        let params = d
            .columns()
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let factor = factor_table.as_ref().map_or(1.0, |t| t.entries[i].factor);
                FeatureParams::fit(method, col, factor)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FittedScaler {
            method,
            mode,
            feature_names: d.feature_names().to_vec(),
            params,
            factor_table,
        })
    }

    pub fn method(&self) -> ScalerMethod {
        self.method
    }

    pub fn mode(&self) -> FactorMode {
        self.mode
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn params(&self) -> &[FeatureParams] {
        &self.params
    }

    pub fn param(&self, feature: &str) -> Option<&FeatureParams> {
        self.feature_names
            .iter()
            .position(|f| f == feature)
            .map(|i| &self.params[i])
    }

    pub fn factor_table(&self) -> Option<&ScalingFactorTable> {
        self.factor_table.as_ref()
    }

    /// Returns a scaled copy of `d`; the input is left untouched.
    ///
    /// Columns the scaler was not fitted on are passed through unchanged.
    pub fn transform(&self, d: &Dataset) -> Result<Dataset> {
        let missing: Vec<String> = self
            .feature_names
            .iter()
            .filter(|f| d.feature_index(f).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(ScalerError::MissingFeatures(missing));
        }
        let mut passthrough = Vec::new();
        let columns = d
            .feature_names()
            .iter()
            .zip(d.columns())
            .map(|(name, col)| match self.param(name) {
                Some(p) => col.iter().map(|&x| p.apply(x)).collect(),
                None => {
                    passthrough.push(name.as_str());
                    col.clone()
                }
            })
            .collect();
        if !passthrough.is_empty() {
            warn!(
                "passing through unfitted column(s): {}",
                passthrough.join(", ")
            );
        }
        Ok(d.replace_columns(d.feature_names().to_vec(), columns)?)
    }

    /// Human-readable parameter listing.
    ///
    /// DTization lists `feature depth=<d> S=<factor>` sorted by depth then
    /// name (unassigned features last, shown as `depth=-`).
    pub fn describe(&self) -> String {
        let mut out = format!("# method: {}", self.method);
        if let Some(t) = &self.factor_table {
            out.push_str(&format!(
                " mode: {} x={} nf={}\n",
                t.mode, t.exponent_x, t.nf_total
            ));
            for e in t.sorted_entries() {
                let depth = e
                    .first_depth
                    .map_or_else(|| "-".to_string(), |d| d.to_string());
                out.push_str(&format!(
                    "{} depth={} S={:.4}\n",
                    e.feature, depth, e.factor
                ));
            }
            return out;
        }
        out.push('\n');
        for (name, p) in self.feature_names.iter().zip(&self.params) {
            let line = match p {
                FeatureParams::MinMax { min, max } => format!("{name} min={min} max={max}"),
                FeatureParams::Standard { mean, std } => format!("{name} mean={mean} std={std}"),
                FeatureParams::Log { shift, constant } => {
                    format!("{name} shift={shift} constant={constant}")
                }
                FeatureParams::Robust { quartiles: q } => format!("{name} q1={} q3={}", q.q1, q.q3),
                FeatureParams::Dtization {
                    quartiles: q,
                    factor,
                } => {
                    format!("{name} q1={} q3={} S={factor}", q.q1, q.q3)
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    fn to_document(&self) -> ScalerDocument {
        ScalerDocument {
            format_version: FORMAT_VERSION,
            method: self.method,
            mode: self.mode,
            features: self.feature_names.clone(),
            parameters: self.params.clone(),
            factor_table: self.factor_table.clone(),
        }
    }

    fn from_document(doc: ScalerDocument) -> Result<Self> {
        if doc.features.len() != doc.parameters.len() {
            return Err(ScalerError::Invalid(format!(
                "{} features but {} parameter sets",
                doc.features.len(),
                doc.parameters.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (name, p) in doc.features.iter().zip(&doc.parameters) {
            if !seen.insert(name) {
                return Err(ScalerError::Invalid(format!("duplicate feature '{name}'")));
            }
            if p.method() != doc.method {
                return Err(ScalerError::Invalid(format!(
                    "feature '{name}' has {} parameters in a {} scaler",
                    p.method(),
                    doc.method
                )));
            }
            p.validate(name)?;
        }
        match (&doc.factor_table, doc.method) {
            (Some(t), ScalerMethod::Dtization) => {
                let names_match = t.entries.len() == doc.features.len()
                    && t.entries
                        .iter()
                        .zip(&doc.features)
                        .all(|(e, f)| &e.feature == f);
                if !names_match || !t.is_consistent() || t.mode != doc.mode {
                    return Err(ScalerError::Invalid("factor table is inconsistent".into()));
                }
                for (e, p) in t.entries.iter().zip(&doc.parameters) {
                    if let FeatureParams::Dtization { factor, .. } = p {
                        if *factor != e.factor {
                            return Err(ScalerError::Invalid(format!(
                                "factor of '{}' disagrees with the factor table",
                                e.feature
                            )));
                        }
                    }
                }
            }
            (None, ScalerMethod::Dtization) => {
                return Err(ScalerError::Invalid(
                    "dtization scaler without factor table".into(),
                ))
            }
            (Some(_), _) => {
                return Err(ScalerError::Invalid(
                    "factor table on a non-dtization scaler".into(),
                ))
            }
            (None, _) => {}
        }
        Ok(FittedScaler {
            method: doc.method,
            mode: doc.mode,
            feature_names: doc.features,
            params: doc.parameters,
            factor_table: doc.factor_table,
        })
    }

    /// Serialises to the checksummed JSON document.
    pub fn to_json(&self) -> String {
        let mut value =
            serde_json::to_value(self.to_document()).expect("scaler document serialises");
        let checksum = checksum(&value);
        value
            .as_object_mut()
            .expect("document is an object")
            .insert("checksum".into(), Value::String(checksum));
        serde_json::to_string_pretty(&value).expect("value serialises") + "\n"
    }

    /// Parses and validates a document produced by [`FittedScaler::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| ScalerError::Parse(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| ScalerError::Parse("top level is not an object".into()))?;
        match obj.get("format_version") {
            Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(ScalerError::VersionMismatch {
                    found: v.to_string(),
                })
            }
            None => return Err(ScalerError::Parse("missing format_version".into())),
        }
        match obj.get("method") {
            Some(Value::String(m)) => {
                m.parse::<ScalerMethod>()?;
            }
            _ => return Err(ScalerError::Parse("missing method".into())),
        }
        let stored = match obj.remove("checksum") {
            Some(Value::String(s)) => s,
            _ => return Err(ScalerError::Parse("missing checksum".into())),
        };
        if checksum(&value) != stored {
            return Err(ScalerError::ChecksumMismatch);
        }
        let doc: ScalerDocument =
            serde_json::from_value(value).map_err(|e| ScalerError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }
}

/// On-disk layout; `checksum` is added next to these fields.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalerDocument {
    format_version: u64,
    method: ScalerMethod,
    mode: FactorMode,
    features: Vec<String>,
    parameters: Vec<FeatureParams>,
    factor_table: Option<ScalingFactorTable>,
}

/// SHA-256 over the compact serialisation (object keys sorted).
fn checksum(value: &Value) -> String {
    let canonical = serde_json::to_string(value).expect("value serialises");
    format!(
        "sha256:{}",
        hex::encode(Sha256::digest(canonical.as_bytes()))
    )
}

/// Writes the scaler atomically: a sibling temp file is renamed into place.
pub fn save_scaler(scaler: &FittedScaler, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| ScalerError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, scaler.to_json()).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn load_scaler(path: impl AsRef<Path>) -> Result<FittedScaler> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScalerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    FittedScaler::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Target;

    fn single(values: &[f64]) -> Dataset {
        Dataset::new(vec!["f".into()], vec![values.to_vec()]).unwrap()
    }

    fn worked_example() -> Dataset {
        Dataset::new(vec!["f".into()], vec![vec![1.0, 2.0, 10.0, 11.0]])
            .unwrap()
            .with_target(
                "y",
                Target::Labels(["a", "a", "b", "b"].map(String::from).to_vec()),
            )
            .unwrap()
    }

    #[test]
    fn minmax_fit_and_transform() {
        let d = single(&[0.0, 5.0, 10.0]);
        let s = FittedScaler::fit(&d, ScalerMethod::MinMax, FactorMode::AsPublished).unwrap();
        assert_eq!(
            s.param("f"),
            Some(&FeatureParams::MinMax {
                min: 0.0,
                max: 10.0
            })
        );
        assert_eq!(s.transform(&d).unwrap().column(0), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn log_shift() {
        let d = single(&[-2.0, 0.0, 7.0]);
        let s = FittedScaler::fit(&d, ScalerMethod::Log, FactorMode::AsPublished).unwrap();
        assert_eq!(
            s.param("f"),
            Some(&FeatureParams::Log {
                shift: 3.0,
                constant: false
            })
        );
        let out = s.transform(&d).unwrap();
        assert_eq!(out.column(0), &[0.0, 3f64.ln(), 10f64.ln()]);
        // Below the shifted domain the argument is floored, never NaN.
        assert!(s.transform(&single(&[-50.0])).unwrap().column(0)[0].is_finite());
    }

    #[test]
    fn standard_uses_population_std() {
        let d = single(&[1.0, 3.0]);
        let s = FittedScaler::fit(&d, ScalerMethod::Standard, FactorMode::AsPublished).unwrap();
        assert_eq!(
            s.param("f"),
            Some(&FeatureParams::Standard {
                mean: 2.0,
                std: 1.0
            })
        );
        assert_eq!(s.transform(&d).unwrap().column(0), &[-1.0, 1.0]);
    }

    #[test]
    fn robust_maps_quartiles_to_unit_interval() {
        let s = FittedScaler::fit(
            &single(&[1.0, 2.0, 3.0, 4.0]),
            ScalerMethod::Robust,
            FactorMode::AsPublished,
        )
        .unwrap();
        assert_eq!(
            s.transform(&single(&[1.75, 3.25])).unwrap().column(0),
            &[0.0, 1.0]
        );
    }

    #[test]
    fn dtization_worked_example() {
        let d = worked_example();
        let s = FittedScaler::fit(&d, ScalerMethod::Dtization, FactorMode::AsPublished).unwrap();
        let q = quartiles(&[1.0, 2.0, 10.0, 11.0]).unwrap();
        assert_eq!(
            s.param("f"),
            Some(&FeatureParams::Dtization {
                quartiles: q,
                factor: 2.0
            })
        );
        let p = FeatureParams::Dtization {
            quartiles: quartiles(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            factor: 2.0,
        };
        assert_eq!(p.apply(3.25), 2.0);
    }

    #[test]
    fn dtization_requires_target() {
        let err = FittedScaler::fit(
            &single(&[1.0, 2.0]),
            ScalerMethod::Dtization,
            FactorMode::AsPublished,
        );
        assert!(matches!(err, Err(ScalerError::MissingTarget)));
    }

    #[test]
    fn constant_column_maps_to_zero_everywhere() {
        let d = Dataset::new(vec!["c".into()], vec![vec![4.0; 5]])
            .unwrap()
            .with_target(
                "y",
                Target::Labels(["a", "b", "a", "b", "a"].map(String::from).to_vec()),
            )
            .unwrap();
        for m in ScalerMethod::ALL {
            let s = FittedScaler::fit(&d, m, FactorMode::AsPublished).unwrap();
            assert_eq!(s.transform(&d).unwrap().column(0), &[0.0; 5], "{m}");
        }
    }

    #[test]
    fn transform_reports_missing_features_and_passes_extras() {
        let s = FittedScaler::fit(
            &single(&[0.0, 1.0]),
            ScalerMethod::MinMax,
            FactorMode::AsPublished,
        )
        .unwrap();
        let other = Dataset::new(vec!["g".into()], vec![vec![1.0]]).unwrap();
        assert!(matches!(s.transform(&other), Err(ScalerError::MissingFeatures(m)) if m == ["f"]));
        let wide = Dataset::new(vec!["g".into(), "f".into()], vec![vec![7.0], vec![0.5]]).unwrap();
        let out = s.transform(&wide).unwrap();
        assert_eq!(out.column(0), &[7.0]);
        assert_eq!(out.column(1), &[0.5]);
    }

    #[test]
    fn unknown_method_is_reported() {
        assert!(matches!(
            "quantile".parse::<ScalerMethod>(),
            Err(ScalerError::UnknownMethod(_))
        ));
        let s = FittedScaler::fit(
            &single(&[0.0, 1.0]),
            ScalerMethod::MinMax,
            FactorMode::AsPublished,
        )
        .unwrap();
        let mut v: Value = serde_json::from_str(&s.to_json()).unwrap();
        v["method"] = Value::String("quantile".into());
        let err = FittedScaler::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, ScalerError::UnknownMethod(ref m) if m == "quantile"));
        assert!(err.to_string().contains("unknown method"));
    }

    #[test]
    fn corrupted_documents_are_rejected() {
        let s = FittedScaler::fit(
            &worked_example(),
            ScalerMethod::Dtization,
            FactorMode::Descending,
        )
        .unwrap();
        let text = s.to_json();
        assert_eq!(FittedScaler::from_json(&text).unwrap(), s);

        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            FittedScaler::from_json(truncated),
            Err(ScalerError::Parse(_))
        ));

        let tampered = text.replace("\"q1\": 1.75", "\"q1\": 1.5");
        assert_ne!(tampered, text);
        assert!(matches!(
            FittedScaler::from_json(&tampered),
            Err(ScalerError::ChecksumMismatch)
        ));

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["format_version"] = Value::from(2);
        assert!(matches!(
            FittedScaler::from_json(&v.to_string()),
            Err(ScalerError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn inconsistent_factor_is_rejected_even_with_valid_checksum() {
        let s = FittedScaler::fit(
            &worked_example(),
            ScalerMethod::Dtization,
            FactorMode::AsPublished,
        )
        .unwrap();
        let mut v: Value = serde_json::from_str(&s.to_json()).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("checksum");
        obj.get_mut("parameters").unwrap()[0]["factor"] = Value::from(1.5);
        let sum = checksum(&v);
        v["checksum"] = Value::String(sum);
        assert!(matches!(
            FittedScaler::from_json(&v.to_string()),
            Err(ScalerError::Invalid(_))
        ));
    }
}
